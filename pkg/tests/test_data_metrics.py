import itertools
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gognn.data import (load_cci, load_ddi, parse_ratios, rule_edges, save_dataset, split,
                        synth_generate)
from gognn.errors import ContractError, DataError
from gognn.metrics import RankedPredictions, ap, auc


def brute_auc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [b for b, l in zip(s, y) if not l]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def brute_ap(s, y):
    ranked = sorted(range(len(s)), key=lambda k: (-s[k], k))
    hits, total = 0, 0.0
    for rank, k in enumerate(ranked, 1):
        if y[k]:
            hits += 1
            total += hits / rank
    return total / hits


# ---------------------------------------------------------------- metrics

def test_metric_hand_cases():
    assert auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75
    assert ap([0.9, 0.8, 0.7], [0, 1, 1]) == pytest.approx((1 / 2 + 2 / 3) / 2, abs=1e-15)
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.4] * 5, [1, 0, 1, 0, 0]) == 0.5
    assert ap([0.9, 0.1, 0.2], [1, 0, 0]) == 1.0
    assert ap([0.3, 0.2, 0.3], [1, 1, 1]) == 1.0


def test_metric_errors():
    with pytest.raises(ContractError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ContractError):
        ap([0.1, 0.2], [0, 0])
    with pytest.raises(ContractError):
        RankedPredictions([0.1], [1, 0])


def test_metrics_match_brute_force_oracles():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))  # coarse grids force ties
        y = rng.integers(0, 2, n)
        y[rng.integers(n)] = 1
        if y.all():
            y[(np.flatnonzero(y)[0] + 1) % n] = 0
        assert abs(auc(s, y) - brute_auc(s.tolist(), y.tolist())) <= 1e-12
        assert abs(ap(s, y) - brute_ap(s.tolist(), y.tolist())) <= 1e-12


@given(st.lists(st.integers(-1000, 1000), min_size=2, max_size=40),
       st.lists(st.booleans(), min_size=2, max_size=40))
@settings(max_examples=200, deadline=None)
def test_auc_invariant_under_increasing_transform(scores, labels):
    n = min(len(scores), len(labels))
    s, y = np.array(scores[:n]) / 100.0, np.array(labels[:n], dtype=int)
    if y.all() or not y.any():
        return
    assert auc(s, y) == auc(np.exp(s / 10) * 2 + 3, y)


# ---------------------------------------------------------------- loading

LINKS_HEADER = "chemical1\tchemical2\tsimilarity\texperimental\tdatabase\ttextmining\tcombined_score\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def mols(tmp_path):
    return write(tmp_path / "mols.tsv", "a\tCCO\nb\tc1ccccc1\nc\tCC(=O)O\nd\tN\nbad\tC1CC\n")


def test_threshold_boundary_keeps_two_of_three(tmp_path, mols):
    links = write(tmp_path / "links.tsv", LINKS_HEADER + "a\tb\t0\t0\t0\t0\t899\n"
                  "a\tc\t0\t0\t0\t0\t900\nb\tc\t0\t0\t0\t0\t950\n")
    with pytest.raises(DataError, match="mols.tsv:5"):
        load_cci(links, mols, threshold=900)
    ds = load_cci(links, mols, threshold=900, strict=False)
    assert len(ds) == 2 and ds.stats["unparseable_molecules"] == 1
    assert ds.stats["below_threshold"] == 1


def test_edge_count_monotone_in_threshold(tmp_path, mols):
    rng = np.random.default_rng(1)
    ids = "abcd"
    rows = [f"{ids[i]}\t{ids[j]}\t0\t0\t0\t0\t{rng.integers(0, 1000)}\n"
            for i, j in itertools.combinations(range(4), 2)]
    links = write(tmp_path / "links.tsv", LINKS_HEADER + "".join(rows))
    counts = [len(load_cci(links, mols, t, strict=False)) for t in range(0, 1000, 50)]
    assert counts == sorted(counts, reverse=True)


def test_cci_dedup_self_and_missing(tmp_path, mols):
    links = write(tmp_path / "links.tsv", LINKS_HEADER + "a\tb\t0\t0\t0\t0\t990\n"
                  "b\ta\t0\t0\t0\t0\t990\na\ta\t0\t0\t0\t0\t990\na\tzz\t0\t0\t0\t0\t990\n")
    ds = load_cci(links, mols, 900, strict=False)
    assert len(ds) == 1 and ds.ids == ["a", "b"]
    assert (ds.stats["duplicates"], ds.stats["self_links"], ds.stats["missing_molecule"]) == (1, 1, 1)


def test_malformed_link_row_is_located(tmp_path, mols):
    links = write(tmp_path / "links.tsv", LINKS_HEADER + "a\tb\t0\t0\t0\t0\t990\na\tb\tx\n")
    good = write(tmp_path / "good.tsv", "a\tCCO\nb\tCC\n")
    with pytest.raises(DataError, match="links.tsv:3"):
        load_cci(links, good, 900)
    assert load_cci(links, mols, 900, strict=False).stats["malformed_rows"] == 1


def test_load_ddi_remaps_relations(tmp_path, mols):
    triples = write(tmp_path / "t.tsv", "a\tb\tC0002\nb\tc\tC0001\na\tb\tC0001\nb\ta\tC0002\n")
    ds = load_ddi(triples, mols, strict=False)
    assert ds.relation_names == ["C0001", "C0002"] and ds.relation_count == 2
    assert sorted(map(tuple, ds.edges.tolist())) == [(0, 0, 1), (0, 1, 1), (1, 0, 2)]
    assert ds.stats["duplicates"] == 1
    empty = load_ddi(write(tmp_path / "e.tsv", ""), mols, strict=False)
    assert len(empty) == 0 and empty.relation_count == 0


def test_bundled_sample_loads_without_skips():
    base = resources.files("gognn") / "data"
    ds = load_cci(base / "cci_sample_links.tsv", base / "cci_sample_molecules.tsv",
                  threshold=900, strict=True)
    assert ds.stats["rows"] == 200
    assert all(ds.stats[k] == 0 for k in ("malformed_rows", "unparseable_molecules",
                                          "missing_molecule"))


# ---------------------------------------------------------------- split

def test_split_examples():
    s = split(10, (0.9, 0.1), 0)
    assert (len(s.train), len(s.valid), len(s.test)) == (9, 0, 1)
    s = split(10, parse_ratios("6:2:2"), 0)
    assert (len(s.train), len(s.valid), len(s.test)) == (6, 2, 2)
    assert np.array_equal(split(10, (0.6, 0.2, 0.2), 5).train, split(10, (0.6, 0.2, 0.2), 5).train)
    with pytest.raises(ContractError):
        split(2, (0.8, 0.1, 0.1), 0)
    with pytest.raises(ContractError):
        split(10, (0.5, 0.2), 0)


@given(st.integers(3, 500), st.sampled_from(["8:1:1", "6:2:2", "9:1", "7:3"]), st.integers(0, 99))
@settings(max_examples=100, deadline=None)
def test_split_partitions(n, ratios, seed):
    r = parse_ratios(ratios)
    s = split(n, r, seed)
    allidx = np.concatenate([s.train, s.valid, s.test])
    assert sorted(allidx.tolist()) == list(range(n))
    parts = [s.train, s.test] if len(r) == 2 else [s.train, s.valid, s.test]
    for part, ratio in zip(parts, r):
        assert abs(len(part) - ratio * n) <= 1 + (n < 10)


# ---------------------------------------------------------------- synthetic

def test_synth_bipartite_rule():
    groups = [frozenset({0}), frozenset({1}), frozenset({2}), frozenset({0}), frozenset({1, 2})]
    got = {(i, j) for i, _, j in rule_edges(groups, [(0, 1)])}
    assert got == {(0, 1), (0, 4), (1, 3), (3, 4)}


def test_synth_is_deterministic_and_matches_rules():
    a = synth_generate(60, 3, seed=7)
    b = synth_generate(60, 3, seed=7)
    assert a.smiles == b.smiles and np.array_equal(a.edges, b.edges)
    full = [(x, y) for x in range(3) for y in range(x, 3)]
    ds = synth_generate(60, 3, rule_table=full, seed=3)
    expected = sum(1 for i, j in itertools.combinations(range(60), 2)
                   if any((x in ds.groups[i] and y in ds.groups[j]) or
                          (y in ds.groups[i] and x in ds.groups[j]) for x, y in full))
    assert len(ds) == expected
    assert all(1 <= len(g) <= 2 for g in ds.groups)


def test_synth_ddi_relations_and_round_trip(tmp_path):
    ds = synth_generate(30, 3, rule_table=[(0, 1), (1, 2), (2, 2)], seed=2, task="ddi")
    assert ds.relation_count == 3 and set(ds.edges[:, 1]) <= {0, 1, 2}
    path, mol_path = save_dataset(ds, tmp_path)
    back = load_ddi(path, mol_path)
    key = lambda d: {(frozenset((d.ids[i], d.ids[j])), d.relation_names[r])  # noqa: E731
                     for i, r, j in d.edges}
    assert key(back) == key(ds)


def test_synth_cci_round_trip(tmp_path):
    ds = synth_generate(40, 4, seed=9)
    path, mol_path = save_dataset(ds, tmp_path)
    back = load_cci(path, mol_path, threshold=950)
    edge_set = lambda d: {frozenset((d.ids[i], d.ids[j])) for i, j in d.edges}  # noqa: E731
    assert edge_set(back) == edge_set(ds)


def test_synth_rejects_bad_arguments():
    with pytest.raises(ContractError):
        synth_generate(10, 1)
    with pytest.raises(ContractError):
        synth_generate(10, 3, rule_table=[(0, 5)])
