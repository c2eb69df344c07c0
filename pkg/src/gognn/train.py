"""Training loop, evaluation and inference.

Message passing always runs over the training edges only; validation and
test interactions are used purely as supervision targets.
"""

import logging
import time

import numpy as np

from . import tensor as T
from .chem import parse_smiles
from .data import parse_ratios, split as make_split
from .errors import ContractError, DataError, DivergenceError, NonFiniteError
from .interaction import InteractionGraph
from .metrics import ap, auc
from .model import GoGNNModel
from .mol_encoder import MoleculeBatch
from .objectives import NegativeSampler, cci_logits, cci_loss, ddi_logits, ddi_loss
from .optim import Adam

log = logging.getLogger(__name__)

_PART_CODES = {"train": 1, "valid": 2, "test": 3}


def _logits(model, x, rows):
    if model.config.task == "cci":
        return cci_logits(x, rows)
    return ddi_logits(x, model.relation_weights, rows)


def _loss(model, pos, neg):
    return (cci_loss if model.config.task == "cci" else ddi_loss)(pos, neg)


def _molecule_batch(model, graphs):
    return MoleculeBatch(graphs, dtype=model.dtype)


def build_model(config, dataset, split):
    """Fresh model whose context holds the dataset molecules and training edges."""
    if config.task != dataset.task:
        raise ContractError(f"config task {config.task!r} does not match dataset {dataset.task!r}")
    model = GoGNNModel(config, dataset.relation_count)
    rel = dataset.relations(split.train)
    model.context = {
        "ids": list(dataset.ids),
        "smiles": list(dataset.smiles),
        "edges": dataset.pairs(split.train).tolist(),
        "relations": None if rel is None else rel.tolist(),
        "relation_names": list(dataset.relation_names),
        "edge_rows": np.asarray(split.train).tolist(),
    }
    return model


def message_graph(model, n_extra=0, read_log=None):
    ctx = model.context
    rel = ctx.get("relations")
    graph = InteractionGraph(len(ctx["ids"]) + n_extra, ctx["edges"],
                             None if rel is None else rel, model.relation_count,
                             edge_ids=ctx.get("edge_rows"))
    graph.read_log = read_log
    return graph


def evaluation_negatives(dataset, positives, seed, part="test"):
    """One corrupted copy per positive, filtered against every known positive."""
    sampler = NegativeSampler(dataset.n_nodes, dataset.pairs(), dataset.relations())
    rng = np.random.default_rng([int(seed), _PART_CODES.get(part, 0)])
    return sampler.corrupt_batch(positives, rng)


def train(config, dataset, split=None, read_log=None, progress=None):
    """Returns ``(model, history)``; the model carries the best-validation weights.

    ``history`` has one dict per epoch: ``epoch``, ``loss`` (mean per positive),
    ``valid_auc`` (None without a validation part), ``seconds``.
    """
    split = split if split is not None else make_split(dataset, parse_ratios(config.split),
                                                       config.seed)
    if not len(split.train):
        raise DataError("no training interactions")
    model = build_model(config, dataset, split)
    graph = message_graph(model, read_log=read_log)
    batch = _molecule_batch(model, dataset.graphs)
    opt = Adam(model.named_parameters(), lr=config.learning_rate, warmup=config.lr_warmup)
    sampler = NegativeSampler(dataset.n_nodes, dataset.pairs(split.train),
                              dataset.relations(split.train), config.negative_sampling)
    rng = np.random.default_rng([config.seed, 0])
    train_rows = dataset.edges[split.train]

    valid_rows = dataset.edges[split.valid] if len(split.valid) else None
    valid_neg = (evaluation_negatives(dataset, valid_rows, config.seed, "valid")
                 if valid_rows is not None else None)

    history, best, best_auc, stale = [], model.snapshot(), -np.inf, 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_rows))
        total = 0.0
        for b, start in enumerate(range(0, len(order), config.batch_edges)):
            pos = train_rows[order[start:start + config.batch_edges]]
            neg = sampler.corrupt_batch(pos, rng)
            x = model(graph, batch)
            loss = _loss(model, _logits(model, x, pos), _logits(model, x, neg))
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, b, value)
            opt.zero_grad()
            T.backward(loss)
            try:
                opt.step()
            except NonFiniteError as err:
                raise DivergenceError(epoch, b, str(err)) from err
            total += value
        entry = {"epoch": epoch, "loss": total / len(train_rows), "valid_auc": None}
        if valid_rows is not None:
            x = model(graph, batch)
            entry["valid_auc"] = _rank_metrics(model, x, valid_rows, valid_neg)["auc"]
            if entry["valid_auc"] > best_auc:
                best_auc, best, stale = entry["valid_auc"], model.snapshot(), 0
            else:
                stale += 1
        entry["seconds"] = time.perf_counter() - t0
        history.append(entry)
        if progress is not None:
            progress(entry)
        log.info("epoch %d loss %.6f valid_auc %s", epoch, entry["loss"], entry["valid_auc"])
        if valid_rows is not None and stale >= config.patience:
            break
    if valid_rows is not None:
        model.load_state(best)
        model.context["best_valid_auc"] = best_auc
    return model, history


def _rank_metrics(model, x, pos, neg):
    sp = _logits(model, x, pos).data
    sn = _logits(model, x, neg).data
    scores = np.concatenate([sp, sn])
    labels = np.concatenate([np.ones(len(sp), dtype=np.int64), np.zeros(len(sn), dtype=np.int64)])
    return {"auc": auc(scores, labels), "ap": ap(scores, labels),
            "n_pos": int(len(sp)), "n_neg": int(len(sn))}


def representations(model, dataset, read_log=None):
    """Final per-node vectors for ``dataset`` molecules under the model's training graph."""
    graph = message_graph(model, read_log=read_log)
    return model(graph, _molecule_batch(model, dataset.graphs))


def evaluate(model, dataset, split, part="test", seed=None, read_log=None):
    """AUC and AP over the part's positives plus as many sampled non-edges."""
    rows = split.part(part)
    if not len(rows):
        raise ContractError(f"split part {part!r} is empty")
    if model.config.task != dataset.task:
        raise ContractError(f"model task {model.config.task!r} does not match dataset")
    pos = dataset.edges[rows]
    neg = evaluation_negatives(dataset, pos, model.config.seed if seed is None else seed, part)
    return _rank_metrics(model, representations(model, dataset, read_log), pos, neg)


def predict(model, queries, molecules=None):
    """Probability for each (a, b) or (a, relation, b) query of molecule ids.

    Ids missing from the model are parsed from ``molecules`` ({id: smiles})
    and attached as isolated nodes. A query that cannot be resolved
    gets an ``error`` entry; the others still get a ``probability``.
    """
    ctx = model.context
    index = {m: k for k, m in enumerate(ctx["ids"])}
    if not hasattr(model, "_graphs"):
        model._graphs = [parse_smiles(s, molecule_id=m) for m, s in zip(ctx["ids"], ctx["smiles"])]
    graphs = list(model._graphs)
    rel_index = {name: k for k, name in enumerate(ctx.get("relation_names") or [])}
    results, rows, slots = [], [], []
    errors = {}
    for q in queries:
        q = tuple(q)
        try:
            ends = [q[0], q[-1]]
            for m in ends:
                if m in index or m in errors:
                    continue
                if molecules is None or m not in molecules:
                    raise DataError(f"unknown molecule id {m!r}")
                try:
                    graphs.append(parse_smiles(molecules[m], molecule_id=m))
                except DataError as err:
                    errors[m] = str(err)
                    raise
                index[m] = len(graphs) - 1
            for m in ends:
                if m in errors:
                    raise DataError(errors[m])
            if model.config.task == "cci":
                if len(q) != 2:
                    raise DataError("cci queries are (id, id) pairs")
                row = (index[q[0]], index[q[1]])
            else:
                if len(q) != 3:
                    raise DataError("ddi queries are (id, relation, id) triplets")
                r = q[1]
                if r in rel_index:
                    r = rel_index[r]
                elif not (isinstance(r, (int, np.integer)) and 0 <= r < model.relation_count):
                    raise DataError(f"unknown relation {r!r}")
                row = (index[q[0]], int(r), index[q[2]])
        except DataError as err:
            results.append({"query": q, "error": str(err)})
            continue
        results.append({"query": q, "probability": None})
        rows.append(row)
        slots.append(len(results) - 1)
    if rows:
        graph = message_graph(model, n_extra=len(graphs) - len(ctx["ids"]))
        x = model(graph, _molecule_batch(model, graphs))
        logits = _logits(model, x, np.array(rows)).data
        tiny, gap = np.finfo(np.float64).tiny, np.finfo(np.float64).epsneg
        probs = np.clip(T.sigmoid(logits).data, tiny, 1.0 - gap)
        for slot, p in zip(slots, probs):
            results[slot]["probability"] = float(p)
    return results


def train_auc(model, dataset, split):
    return evaluate(model, dataset, split, "train")["auc"]
