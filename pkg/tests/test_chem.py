import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gognn.chem import (ELEMENTS, FEATURE_DIM, build_adjacency, encode_atom_features,
                        parse_smiles, read_molecule_table, write_molecule_table)
from gognn.errors import SmilesParseError

CORPUS = [
    "C", "CC", "C=C", "C#N", "CCO", "OCC", "c1ccccc1", "CC(=O)O", "OC(=O)c1ccccc1",
    "CCOC(=O)c1ccccc1", "[NH4+]", "[O-]C(=O)C", "c1ccncc1", "c1cc[nH]c1", "C1CC2CCC1C2",
    "ClC(Cl)(Cl)Cl", "BrCCBr", "FC(F)(F)I", "OP(=O)(O)O", "CS(=O)(=O)N", "B(O)(O)O",
    "c1ccc2ccccc2c1", "C%10CCCCC%10", "N#CC#N", "CC(C)(C)C(=O)[O-]", "c1ccsc1", "c1ccoc1",
    "[Na+]", "O=C=O", "C1=CC=CC=C1",
]


def test_parse_examples():
    g = parse_smiles("C")
    assert (g.n_atoms, g.bonds) == (1, [])
    assert parse_smiles("C=C").bonds == [(0, 1, 2.0)]
    assert parse_smiles("CCO").bonds == [(0, 1, 1.0), (1, 2, 1.0)]
    benzene = parse_smiles("c1ccccc1")
    assert benzene.n_atoms == 6
    assert sorted(benzene.bonds) == [(0, 1, 1.5), (0, 5, 1.5), (1, 2, 1.5), (2, 3, 1.5),
                                     (3, 4, 1.5), (4, 5, 1.5)]


def test_feature_examples():
    c = parse_smiles("C").atoms[0].feature
    assert c.shape == (FEATURE_DIM,)
    assert np.flatnonzero(c[:11]).tolist() == [1]
    assert c[11] == 1.0  # degree 0
    assert c[17 + 2] == 1.0  # charge 0
    assert c[22] == 0.0
    assert c[23 + 4] == 1.0  # CH4

    n = parse_smiles("[NH4+]").atoms[0]
    assert (n.formal_charge, n.hydrogens) == (1, 4)
    assert n.feature[17 + 3] == 1.0
    assert n.feature[23 + 4] == 1.0
    assert n.feature[ELEMENTS.index("N")] == 1.0


@pytest.mark.parametrize("smi", CORPUS)
def test_feature_layout_invariants(smi):
    g = parse_smiles(smi)
    x = g.features
    assert x.shape == (g.n_atoms, 32)
    assert (x[:, :11].sum(axis=1) == 1).all()
    assert (x[:, 11:17].sum(axis=1) == 1).all()
    assert (x[:, 17:22].sum(axis=1) == 1).all()
    assert (x[:, 23:28].sum(axis=1) == 1).all()
    assert (x[:, 29:] == 0).all()
    for atom in g.atoms:
        assert np.array_equal(atom.feature, encode_atom_features(atom, g))


def test_adjacency_examples():
    assert build_adjacency(parse_smiles("C")).tolist() == [[0.0]]
    assert build_adjacency(parse_smiles("C=C")).tolist() == [[0, 2], [2, 0]]
    assert parse_smiles("CCO").adjacency.tolist() == [[0, 1, 0], [1, 0, 1], [0, 1, 0]]


@pytest.mark.parametrize("smi", CORPUS)
def test_adjacency_invariants(smi):
    g = parse_smiles(smi)
    a = build_adjacency(g)
    assert np.array_equal(a, a.T)
    assert (np.diag(a) == 0).all()
    assert set(np.unique(a[a > 0])) <= {1.0, 1.5, 2.0, 3.0}
    for i, j, _ in g.bonds:
        assert i != j and 0 <= i < g.n_atoms and 0 <= j < g.n_atoms


def test_hydrogens_and_rings():
    g = parse_smiles("Cc1ccccc1")
    assert [a.hydrogens for a in g.atoms] == [3, 0, 1, 1, 1, 1, 1]
    assert [a.in_ring for a in g.atoms] == [False] + [True] * 6
    assert [a.hydrogens for a in parse_smiles("c1ccncc1").atoms] == [1, 1, 1, 0, 1, 1]
    assert parse_smiles("CS(=O)(=O)C").atoms[1].hydrogens == 0
    assert parse_smiles("c1cc[nH]c1").atoms[3].hydrogens == 1


@pytest.mark.parametrize("smi, offset, reason", [
    ("CXC", 1, "unknown element"),
    ("C1CC", 1, "unclosed ring"),
    ("CC(C", 2, "unbalanced '('"),
    ("CC)C", 2, "unbalanced ')'"),
    ("CC.O", 2, "disconnected"),
    ("C/C=C/C", 1, "stereo"),
    ("[13CH4]", 1, "isotopes"),
    ("N[C@H](C)C", 3, "chirality"),
    ("C=", 1, "without a following atom"),
    ("C((C))", 2, "branch must start"),
    ("CC()C", 3, "empty branch"),
    ("[Xy]", 1, "unknown element"),
    ("", 0, "empty"),
    ("C1C1", 3, "duplicate bond"),
])
def test_parse_errors_are_located(smi, offset, reason):
    with pytest.raises(SmilesParseError) as err:
        parse_smiles(smi)
    assert err.value.offset == offset
    assert reason in err.value.reason


def _nx(g):
    G = nx.Graph()
    for k, a in enumerate(g.atoms):
        G.add_node(k, el=a.element, ar=a.aromatic, ch=a.formal_charge, h=a.hydrogens)
    for i, j, w in g.bonds:
        G.add_edge(i, j, w=w)
    return G


@pytest.mark.parametrize("a, b", [
    ("CCO", "OCC"), ("CC(=O)O", "OC(C)=O"), ("c1ccccc1O", "Oc1ccccc1"),
    ("C1CCCCC1N", "NC1CCCCC1"), ("CC(C)(C)Cl", "ClC(C)(C)C"), ("OC(=O)c1ccccc1", "c1ccc(cc1)C(=O)O"),
])
def test_equivalent_spellings_are_isomorphic(a, b):
    ga, gb = _nx(parse_smiles(a)), _nx(parse_smiles(b))
    assert nx.is_isomorphic(ga, gb, node_match=lambda x, y: x == y,
                            edge_match=lambda x, y: x == y)


# grammar-driven fuzzing: valid-looking and broken strings alike must either
# parse or raise a located SmilesParseError
tokens = st.sampled_from(["C", "c", "N", "n", "O", "o", "S", "s", "P", "B", "F", "Cl", "Br",
                          "I", "[NH4+]", "[O-]", "[nH]", "[Fe+2]", "=", "#", "-", ":", "(",
                          ")", "1", "2", "%12", ".", "/", "@", "X", "[", "]"])


@given(st.lists(tokens, min_size=1, max_size=25))
@settings(max_examples=500, deadline=None)
def test_parser_is_total(parts):
    smi = "".join(parts)
    try:
        g = parse_smiles(smi)
    except SmilesParseError as err:
        assert 0 <= err.offset <= len(smi)
        return
    a = g.adjacency
    assert np.array_equal(a, a.T)
    assert g.features.shape == (g.n_atoms, 32)


def test_molecule_table_round_trip(tmp_path):
    path = tmp_path / "mols.tsv"
    write_molecule_table(path, {"m1": "CCO", "m2": "c1ccccc1"})
    with open(path, "a") as fh:
        fh.write("# trailing comment\n\nbad-row-without-tab\n")
    rows = read_molecule_table(path)
    assert [(r[0], r[1]) for r in rows[:2]] == [("m1", "CCO"), ("m2", "c1ccccc1")]
    assert rows[2][0] is None and rows[2][2] == 6
