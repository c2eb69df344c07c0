import dataclasses

import numpy as np
import pytest

from gognn import tensor as T
from gognn.data import Split, parse_ratios, split, synth_generate
from gognn.errors import CheckpointError, ContractError, DataError, DivergenceError
from gognn.model import (GoGNNModel, TrainConfig, interaction_kind, load_checkpoint,
                         read_config_file, save_checkpoint)
from gognn.train import evaluate, predict, representations, train

SMALL = dict(hidden_dim=16, repr_dim=8, gat_heads=2, epochs=4, patience=50)


@pytest.fixture(scope="module")
def cci():
    ds = synth_generate(24, 2, seed=3)
    return ds, split(ds, parse_ratios("8:1:1"), 0)


@pytest.fixture(scope="module")
def ddi():
    ds = synth_generate(24, 3, seed=4, task="ddi")
    return ds, split(ds, parse_ratios("6:2:2"), 0)


@pytest.fixture(scope="module")
def trained(cci):
    ds, sp = cci
    return train(TrainConfig(**SMALL), ds, sp)


# ---------------------------------------------------------------- config

def test_config_task_defaults():
    assert TrainConfig(task="cci").learning_rate == 0.001
    assert TrainConfig(task="cci", learning_rate=0.01).learning_rate == 0.01
    assert TrainConfig(task="ddi").learning_rate == 0.001
    assert TrainConfig(task="cci").split == "8:1:1"
    assert TrainConfig(task="ddi").split == "6:2:2"
    c = TrainConfig()
    assert (c.hidden_dim, c.repr_dim, c.pooling_ratio, c.gcn_layers, c.gat_heads) == (384, 256, 0.5, 3, 4)


@pytest.mark.parametrize("bad", [dict(task="ppi"), dict(ablation="none"), dict(pooling_ratio=0.0),
                                 dict(learning_rate=-1.0), dict(hidden_dim=0), dict(dtype="int8")])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ContractError):
        TrainConfig(**bad)


def test_config_file_and_coercion(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# small run\ntask = ddi\nhidden_dim = 32  # narrow\npooling_ratio=0.25\n")
    c = TrainConfig.from_dict(read_config_file(path))
    assert c.task == "ddi" and c.hidden_dim == 32 and c.pooling_ratio == 0.25
    assert c.learning_rate == 0.001
    with pytest.raises(ContractError, match="unknown config key"):
        TrainConfig.from_dict({"hiden_dim": "3"})
    with pytest.raises(ContractError, match="expects int"):
        TrainConfig.from_dict({"epochs": "many"})


def test_ablation_wiring():
    assert interaction_kind("cci", "full") == "gat"
    assert interaction_kind("ddi", "full") == "edge"
    assert interaction_kind("cci", "no_attn") == "gcn"
    assert interaction_kind("cci", "mol_only") is None
    assert GoGNNModel(TrainConfig(ablation="mol_only", **SMALL)).interaction is None
    names = dict(GoGNNModel(TrainConfig(ablation="inter_only", **SMALL)).named_parameters())
    assert not any(n.startswith("encoder.") for n in names)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_is_byte_identical(trained, tmp_path):
    model, _ = trained
    a, b = tmp_path / "a.gogn", tmp_path / "b.gogn"
    save_checkpoint(model, a, {"epoch": 4})
    loaded, meta = load_checkpoint(a)
    save_checkpoint(loaded, b, meta)
    assert a.read_bytes() == b.read_bytes()
    assert meta == {"epoch": 4}
    assert loaded.config == model.config and loaded.context == model.context


def test_loaded_model_predicts_like_float32_weights(trained, cci, tmp_path):
    model, _ = trained
    ds, _ = cci
    save_checkpoint(model, tmp_path / "m.gogn")
    loaded, _ = load_checkpoint(tmp_path / "m.gogn")
    q = [(ds.ids[0], ds.ids[5]), (ds.ids[3], ds.ids[9])]
    p0 = [r["probability"] for r in predict(model, q)]
    p1 = [r["probability"] for r in predict(loaded, q)]
    np.testing.assert_allclose(p0, p1, atol=1e-4)


def test_corrupted_checkpoints_rejected(trained, tmp_path):
    model, _ = trained
    path = tmp_path / "m.gogn"
    save_checkpoint(model, path)
    good = path.read_bytes()
    cases = {
        "magic": b"XXXX" + good[4:],
        "version": good[:4] + (7).to_bytes(4, "little") + good[8:],
        "checksum": good[:-20] + bytes([good[-20] ^ 0xFF]) + good[-19:],
        "trailing": good + b"\0",
    }
    for expect, blob in cases.items():
        path.write_bytes(blob)
        with pytest.raises(CheckpointError, match=expect):
            load_checkpoint(path)
    for cut in (3, 10, len(good) // 2, len(good) - 1):
        path.write_bytes(good[:cut])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.gogn")


def test_state_shape_mismatch_is_reported(trained):
    model, _ = trained
    other = GoGNNModel(TrainConfig(**{**SMALL, "repr_dim": 12}))
    with pytest.raises(CheckpointError, match="shape mismatch"):
        other.load_state(model.state())
    state = dict(model.state())
    state.pop(sorted(state)[0])
    with pytest.raises(CheckpointError, match="lacks"):
        model.load_state(state)


# ---------------------------------------------------------------- training

def test_same_seed_same_history(cci):
    ds, sp = cci
    _, h1 = train(TrainConfig(**SMALL), ds, sp)
    _, h2 = train(TrainConfig(**SMALL), ds, sp)
    assert [h["loss"] for h in h1] == [h["loss"] for h in h2]
    assert [h["valid_auc"] for h in h1] == [h["valid_auc"] for h in h2]


def test_returned_model_is_best_validation_snapshot(cci):
    ds, sp = cci
    model, hist = train(TrainConfig(**{**SMALL, "epochs": 8}), ds, sp)
    best = max(h["valid_auc"] for h in hist)
    assert evaluate(model, ds, sp, "valid")["auc"] == pytest.approx(best, abs=1e-12)


def test_held_out_edges_never_message_pass(cci):
    ds, sp = cci
    log = []
    model, _ = train(TrainConfig(**SMALL), ds, sp, read_log=log)
    evaluate(model, ds, sp, "test", read_log=log)
    assert log and set(log) <= set(sp.train.tolist())
    assert not set(log) & (set(sp.test.tolist()) | set(sp.valid.tolist()))


def test_divergence_reports_epoch_and_batch(cci, monkeypatch):
    import gognn.train as tr
    ds, sp = cci
    real = tr._loss
    monkeypatch.setattr(tr, "_loss", lambda m, p, n: T.mul(real(m, p, n), T.as_tensor(np.nan)))
    with pytest.raises(DivergenceError) as info:
        train(TrainConfig(**SMALL), ds, sp)
    assert (info.value.epoch, info.value.batch) == (1, 0)


@pytest.mark.parametrize("ablation", ["mol_only", "inter_only", "no_pool", "no_attn"])
def test_ablations_train(cci, ablation):
    ds, sp = cci
    _, hist = train(TrainConfig(**{**SMALL, "ablation": ablation, "epochs": 2}), ds, sp)
    assert all(np.isfinite(h["loss"]) for h in hist)


def test_ddi_training_and_relation_queries(ddi):
    ds, sp = ddi
    model, hist = train(TrainConfig(task="ddi", **{**SMALL, "epochs": 2}), ds, sp)
    assert model.se_table is not None and all(np.isfinite(h["loss"]) for h in hist)
    i, r, j = ds.edges[0]
    by_name = predict(model, [(ds.ids[i], ds.relation_names[r], ds.ids[j])])[0]
    by_index = predict(model, [(ds.ids[i], int(r), ds.ids[j])])[0]
    assert by_name["probability"] == by_index["probability"]
    assert "error" in predict(model, [(ds.ids[i], "no-such-effect", ds.ids[j])])[0]


def test_task_mismatch_rejected(ddi):
    ds, sp = ddi
    with pytest.raises(ContractError):
        train(TrainConfig(**SMALL), ds, sp)


# ---------------------------------------------------------------- evaluation

def test_empty_part_is_a_contract_violation(trained, cci):
    model, _ = trained
    ds, _ = cci
    sp = split(ds, parse_ratios("9:1"), 0)
    with pytest.raises(ContractError, match="empty"):
        evaluate(model, ds, sp, "valid")


def test_evaluation_is_deterministic(trained, cci):
    model, _ = trained
    ds, sp = cci
    a = evaluate(model, ds, sp, "test", seed=5)
    assert a == evaluate(model, ds, sp, "test", seed=5)
    assert a["n_pos"] == a["n_neg"] == len(sp.test)


def test_untrained_model_scores_at_chance():
    ds = synth_generate(80, 3, seed=9)
    rng = np.random.default_rng(0)
    pairs = set()
    while len(pairs) < 700:
        i, j = sorted(rng.choice(ds.n_nodes, 2, replace=False).tolist())
        pairs.add((i, j))
    ds = dataclasses.replace(ds, edges=np.array(sorted(pairs), dtype=np.int64))
    perm = rng.permutation(len(ds.edges))
    sp = Split(perm[:100], np.zeros(0, dtype=np.int64), perm[100:], 0)
    from gognn.train import build_model
    model = build_model(TrainConfig(**SMALL), ds, sp)
    aucs = [evaluate(model, ds, sp, "test", seed=s)["auc"] for s in range(3)]
    assert abs(np.mean(aucs) - 0.5) <= 0.05


# ---------------------------------------------------------------- prediction

def test_predictions_symmetric_and_self_pair(trained, cci):
    model, _ = trained
    ds, _ = cci
    a, b = ds.ids[1], ds.ids[7]
    p = predict(model, [(a, b), (b, a), (a, a)])
    assert p[0]["probability"] == pytest.approx(p[1]["probability"], abs=1e-15)
    x = representations(model, ds).data[1]
    assert p[2]["probability"] == pytest.approx(1 / (1 + np.exp(-x @ x)), rel=1e-12)
    assert all(0 < r["probability"] < 1 for r in p)


def test_unknown_ids_encoded_fresh_and_bad_rows_isolated(trained, cci):
    model, _ = trained
    ds, _ = cci
    out = predict(model, [(ds.ids[0], "NEW1"), (ds.ids[0], "BAD"), ("GHOST", ds.ids[0]),
                          (ds.ids[2], ds.ids[3])],
                  molecules={"NEW1": "CCO", "BAD": "C1CC"})
    assert 0 < out[0]["probability"] < 1
    assert "error" in out[1] and "error" in out[2]
    assert 0 < out[3]["probability"] < 1
    alone = predict(model, [(ds.ids[2], ds.ids[3])])[0]["probability"]
    assert out[3]["probability"] == pytest.approx(alone, abs=1e-12)


def test_wrong_query_arity(trained):
    model, _ = trained
    ids = model.context["ids"]
    assert "error" in predict(model, [(ids[0], "x", ids[1])])[0]
