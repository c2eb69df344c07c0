"""Command line: ``gognn synth | train | evaluate | predict``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields

from .data import load_dataset, parse_ratios, save_dataset, split, synth_generate
from .errors import CheckpointError, ContractError, DataError, DivergenceError
from .model import TrainConfig, load_checkpoint, read_config_file, save_checkpoint
from .train import evaluate, predict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, record, table_line):
    if args.json:
        print(json.dumps(record, sort_keys=True), flush=True)
    else:
        print(table_line, flush=True)


def _config(args):
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for f in fields(TrainConfig):
        flag = getattr(args, f"cfg_{f.name}", None)
        if flag is not None:
            values[f.name] = flag
    return TrainConfig.from_dict(values)


def _dataset(args, task, threshold):
    if not args.interactions or not args.molecules:
        raise UsageError("--interactions and --molecules are required")
    return load_dataset(args.interactions, args.molecules, task, threshold, strict=not args.lenient)


def cmd_synth(args):
    ds = synth_generate(args.n_molecules, args.groups, seed=args.seed, task=args.task,
                        p_two_motifs=args.p_two_motifs)
    path, mol_path = save_dataset(ds, args.out)
    _emit(args, {"interactions": str(path), "molecules": str(mol_path), **ds.summary()},
          f"wrote {len(ds)} interactions over {ds.n_nodes} molecules to {path} and {mol_path}")


def cmd_train(args):
    config = _config(args)
    ds = _dataset(args, config.task, config.threshold)
    if not args.json:
        print(f"dataset: {ds.summary()}")
    sp = split(ds, parse_ratios(config.split), config.seed)

    def progress(entry):
        auc = "-" if entry["valid_auc"] is None else f"{entry['valid_auc']:.4f}"
        _emit(args, {"event": "epoch", **entry},
              f"epoch {entry['epoch']:4d}  loss {entry['loss']:.6f}  valid_auc {auc}")

    model, history = train(config, ds, sp, progress=progress)
    metrics = evaluate(model, ds, sp, "test") if len(sp.test) else {}
    meta = {"epochs_run": len(history), "seed": config.seed,
            "best_valid_auc": model.context.get("best_valid_auc"), "test": metrics}
    if args.checkpoint:
        save_checkpoint(model, args.checkpoint, meta)
    _emit(args, {"event": "done", **meta},
          f"test auc {metrics.get('auc', float('nan')):.4f}  ap {metrics.get('ap', float('nan')):.4f}"
          + (f"  checkpoint {args.checkpoint}" if args.checkpoint else ""))


def cmd_evaluate(args):
    model, _ = load_checkpoint(args.checkpoint)
    config = model.config
    ds = _dataset(args, config.task, config.threshold)
    sp = split(ds, parse_ratios(config.split), config.seed)
    if [ds.ids[k] for k in range(ds.n_nodes)] != model.context.get("ids") or \
            sp.train.tolist() != model.context.get("edge_rows"):
        raise DataError("dataset does not match the one the checkpoint was trained on")
    metrics = evaluate(model, ds, sp, args.part, seed=args.seed)
    _emit(args, {"part": args.part, **metrics},
          f"{args.part}: auc {metrics['auc']:.4f}  ap {metrics['ap']:.4f}  "
          f"({metrics['n_pos']} positives, {metrics['n_neg']} negatives)")


def _read_queries(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line.strip() and not line.startswith("#"):
                rows.append(tuple(p.strip() for p in line.split("\t")))
    return rows


def cmd_predict(args):
    model, _ = load_checkpoint(args.checkpoint)
    extra = None
    if args.molecules:
        from .chem import read_molecule_table
        extra = {m: s for m, s, _ in read_molecule_table(args.molecules) if m is not None}
    results = predict(model, _read_queries(args.queries), extra)
    failed = 0
    for r in results:
        q = "\t".join(map(str, r["query"]))
        if "error" in r:
            failed += 1
            _emit(args, {"query": list(r["query"]), "error": r["error"]}, f"{q}\terror: {r['error']}")
        else:
            _emit(args, {"query": list(r["query"]), "probability": r["probability"]},
                  f"{q}\t{r['probability']:.6f}")
    if failed:
        print(f"{failed} of {len(results)} queries failed", file=sys.stderr)


def build_parser():
    p = _Parser(prog="gognn", description="Graph-of-graphs interaction prediction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--n-molecules", type=int, default=60)
    s.add_argument("--groups", type=int, default=3)
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--task", choices=("cci", "ddi"), default="cci")
    s.add_argument("--p-two-motifs", type=float, default=0.1)
    s.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a model")
    e = sub.add_parser("evaluate", help="score a split part of a dataset")
    for q in (t, e):
        q.add_argument("--interactions", help="CCI links or DDI triples file")
        q.add_argument("--molecules", help="molecule table (id, SMILES)")
        q.add_argument("--lenient", action="store_true", help="skip malformed rows")
    t.add_argument("--config", help="key = value file")
    t.add_argument("--checkpoint", "--out", dest="checkpoint",
                   help="where to write the trained model")
    for f in fields(TrainConfig):
        flags = {f"--{f.name}", f"--{f.name.replace('_', '-')}"}
        t.add_argument(*sorted(flags), dest=f"cfg_{f.name}", default=None, metavar="VALUE")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--part", choices=("train", "valid", "test"), default="test")
    e.add_argument("--seed", type=int, default=None, help="negative sampling seed")

    r = sub.add_parser("predict", help="probabilities for query pairs or triplets")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--queries", required=True, help="TSV of 'id<TAB>id' or 'id<TAB>rel<TAB>id'")
    r.add_argument("--molecules", help="SMILES for ids unknown to the checkpoint")

    for q in (s, t, e, r):
        q.add_argument("--json", action="store_true", help="machine-readable JSON lines")
    return p


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "evaluate": cmd_evaluate,
            "predict": cmd_predict}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        print(f"gognn: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (UsageError, ContractError) as err:
        print(f"gognn: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, OSError) as err:
        print(f"gognn: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as err:
        print(f"gognn: diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
