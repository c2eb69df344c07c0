"""SMILES subset parser producing bond-weighted molecule graphs.

Supported: organic-subset atoms (B C N O P S F Cl Br I and aromatic
b c n o p s), bracket atoms with hydrogen count and charge, bonds ``- = # :``,
ring closures (digits and ``%nn``) and parenthesised branches. Stereo marks,
isotopes, atom classes and multi-fragment input are rejected with the byte
offset of the offending character.

Feature layout (32 columns, version 1)::

    0-10   element one-hot: B C N O P S F Cl Br I other
    11-16  degree 0..5
    17-21  formal charge -2..+2
    22     aromatic flag
    23-27  implicit + explicit hydrogen count 0..4
    28     ring membership
    29-31  zero padding

Out-of-range degree, charge and hydrogen values fall into the last bucket of
their block.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SmilesParseError

FEATURE_DIM = 32
FEATURE_VERSION = 1

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
VALENCES = {"B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5),
            "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,)}
BOND_WEIGHTS = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}
AROMATIC_BOND = 1.5

_PERIODIC = set("""H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe
Co Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs
Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po
At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr""".split())
_AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as"}

_DEGREE_OFF, _CHARGE_OFF, _AROM_OFF, _H_OFF, _RING_OFF = 11, 17, 22, 23, 28


@dataclass
class AtomNode:
    element: str
    degree: int = 0
    formal_charge: int = 0
    aromatic: bool = False
    hydrogens: int = 0
    in_ring: bool = False
    feature: np.ndarray = field(default=None, repr=False)


@dataclass
class MoleculeGraph:
    molecule_id: str
    atoms: list
    bonds: list  # (i, j, weight) with i < j

    @property
    def n_atoms(self):
        return len(self.atoms)

    @property
    def adjacency(self):
        return build_adjacency(self)

    @property
    def features(self):
        return np.stack([a.feature for a in self.atoms])

    def permuted(self, perm, molecule_id=None):
        """Copy with atom ``k`` of the result equal to atom ``perm[k]`` of self."""
        inv = np.empty(len(perm), dtype=int)
        inv[np.asarray(perm)] = np.arange(len(perm))
        bonds = []
        for i, j, w in self.bonds:
            a, b = int(inv[i]), int(inv[j])
            bonds.append((min(a, b), max(a, b), w))
        return MoleculeGraph(molecule_id or self.molecule_id,
                             [self.atoms[p] for p in perm], sorted(bonds))


class _Parser:
    def __init__(self, smiles):
        self.s = smiles
        self.pos = 0
        self.atoms = []  # AtomNode with a private bracket flag
        self.bracket = []
        self.explicit_h = []
        self.bonds = {}  # (i, j) -> weight

    def fail(self, reason, offset=None):
        raise SmilesParseError(self.s, self.pos if offset is None else offset, reason)

    def parse(self):
        s = self.s
        if not s:
            self.fail("empty SMILES", 0)
        try:
            s.encode("ascii")
        except UnicodeEncodeError:
            bad = next(i for i, ch in enumerate(s) if ord(ch) > 127)
            self.fail("non-ASCII character", bad)
        prev = None
        pending = None  # (symbol, offset)
        branches = []  # (atom index, offset of '(')
        rings = {}  # number -> (atom, bond symbol or None, offset)
        while self.pos < len(s):
            ch = s[self.pos]
            start = self.pos
            if ch == "(":
                if prev is None:
                    self.fail("branch opened before any atom")
                if pending is not None:
                    self.fail("bond symbol before branch")
                if start > 0 and s[start - 1] == "(":
                    self.fail("branch must start with a bond or an atom")
                branches.append((prev, start))
                self.pos += 1
            elif ch == ")":
                if not branches:
                    self.fail("unbalanced ')'")
                if pending is not None:
                    self.fail("bond symbol without a following atom", pending[1])
                if start > 0 and s[start - 1] == "(":
                    self.fail("empty branch")
                prev, _ = branches.pop()
                self.pos += 1
            elif ch in BOND_WEIGHTS:
                if pending is not None:
                    self.fail("two consecutive bond symbols")
                if prev is None:
                    self.fail("bond symbol before any atom")
                pending = (ch, start)
                self.pos += 1
            elif ch in "/\\":
                self.fail("stereo bond marks are not supported")
            elif ch == ".":
                self.fail("disconnected fragments ('.') are not supported")
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    self.fail("ring closure before any atom")
                if ch == "%":
                    digits = s[self.pos + 1:self.pos + 3]
                    if len(digits) != 2 or not digits.isdigit():
                        self.fail("'%' must be followed by two digits")
                    num = int(digits)
                    self.pos += 3
                else:
                    num = int(ch)
                    self.pos += 1
                bond_sym = pending[0] if pending else None
                pending = None
                if num in rings:
                    other, other_sym, other_off = rings.pop(num)
                    if other == prev:
                        self.fail("ring closure bonds an atom to itself", start)
                    if bond_sym and other_sym and bond_sym != other_sym:
                        self.fail("conflicting ring-closure bond symbols", start)
                    sym = bond_sym or other_sym
                    self._bond(other, prev, sym, start)
                else:
                    rings[num] = (prev, bond_sym, start)
            elif ch == "[":
                idx = self._bracket_atom()
                self._attach(prev, idx, pending, start)
                pending = None
                prev = idx
            else:
                idx = self._organic_atom()
                self._attach(prev, idx, pending, start)
                pending = None
                prev = idx
        if pending is not None:
            self.fail("bond symbol without a following atom", pending[1])
        if branches:
            self.fail("unbalanced '('", branches[-1][1])
        if rings:
            num, (_, _, off) = min(rings.items(), key=lambda kv: kv[1][2])
            self.fail(f"unclosed ring bond {num}", off)
        if not self.atoms:
            self.fail("no atoms", 0)
        return self._finish()

    def _attach(self, prev, idx, pending, offset):
        if prev is not None:
            self._bond(prev, idx, pending[0] if pending else None, offset)

    def _bond(self, i, j, sym, offset):
        key = (min(i, j), max(i, j))
        if key in self.bonds:
            self.fail("duplicate bond between the same atoms", offset)
        if sym is None:
            both_aromatic = self.atoms[i].aromatic and self.atoms[j].aromatic
            weight = AROMATIC_BOND if both_aromatic else 1.0
        else:
            weight = BOND_WEIGHTS[sym]
        self.bonds[key] = weight

    def _new_atom(self, element, aromatic, charge=0, hydrogens=0, bracket=False):
        self.atoms.append(AtomNode(element=element, aromatic=aromatic, formal_charge=charge))
        self.bracket.append(bracket)
        self.explicit_h.append(hydrogens)
        return len(self.atoms) - 1

    def _organic_atom(self):
        s, p = self.s, self.pos
        two = s[p:p + 2]
        if two in ("Cl", "Br"):
            self.pos += 2
            return self._new_atom(two, False)
        ch = s[p]
        if ch in ELEMENTS:
            self.pos += 1
            return self._new_atom(ch, False)
        if ch in AROMATIC:
            self.pos += 1
            return self._new_atom(AROMATIC[ch], True)
        self.fail(f"unknown element or character {ch!r}")

    def _bracket_atom(self):
        s = self.s
        open_at = self.pos
        close = s.find("]", open_at)
        if close < 0:
            self.fail("unclosed '['")
        body = s[open_at + 1:close]
        p = 0
        if p < len(body) and body[p].isdigit():
            self.fail("isotopes are not supported", open_at + 1)
        # element: aromatic two-letter, aromatic one-letter, then periodic symbol
        element, aromatic = None, False
        for cand in (body[p:p + 2], body[p:p + 1]):
            if cand in _AROMATIC_BRACKET:
                element, aromatic = cand.capitalize(), True
                break
            if len(cand) == 2 and cand in _PERIODIC:
                element = cand
                break
            if len(cand) == 1 and cand in _PERIODIC:
                element = cand
                break
        if element is None:
            self.fail(f"unknown element in bracket atom {body!r}", open_at + 1)
        p += len(element)
        if p < len(body) and body[p] == "@":
            self.fail("chirality marks are not supported", open_at + 1 + p)
        hydrogens = 0
        if p < len(body) and body[p] == "H":
            p += 1
            hydrogens = 1
            if p < len(body) and body[p].isdigit():
                hydrogens = int(body[p])
                p += 1
        charge = 0
        if p < len(body) and body[p] in "+-":
            sign = 1 if body[p] == "+" else -1
            p += 1
            if p < len(body) and body[p].isdigit():
                mag = 0
                while p < len(body) and body[p].isdigit():
                    mag = mag * 10 + int(body[p])
                    p += 1
                charge = sign * mag
            else:
                charge = sign
                while p < len(body) and body[p] == ("+" if sign > 0 else "-"):
                    charge += sign
                    p += 1
        if p < len(body):
            what = "atom classes are" if body[p] == ":" else f"character {body[p]!r} is"
            self.fail(f"{what} not supported in bracket atoms", open_at + 1 + p)
        self.pos = close + 1
        return self._new_atom(element, aromatic, charge, hydrogens, bracket=True)

    def _finish(self):
        n = len(self.atoms)
        bonds = sorted((i, j, w) for (i, j), w in self.bonds.items())
        order_sum = [0.0] * n
        for i, j, w in bonds:
            self.atoms[i].degree += 1
            self.atoms[j].degree += 1
            order_sum[i] += w
            order_sum[j] += w
        rings = ring_atoms(n, bonds)
        for k, atom in enumerate(self.atoms):
            atom.in_ring = k in rings
            if self.bracket[k]:
                atom.hydrogens = self.explicit_h[k]
            else:
                atom.hydrogens = implicit_hydrogens(atom.element, order_sum[k])
        graph = MoleculeGraph("", self.atoms, bonds)
        for atom in graph.atoms:
            atom.feature = encode_atom_features(atom, graph)
        return graph


def implicit_hydrogens(element, bond_order_sum):
    valences = VALENCES.get(element)
    if valences is None:
        return 0
    for v in valences:
        if v >= bond_order_sum:
            return max(0, int(v - bond_order_sum))
    return 0


def ring_atoms(n, bonds):
    """Atoms lying on at least one cycle (endpoints of non-bridge bonds)."""
    adj = [[] for _ in range(n)]
    for i, j, _ in bonds:
        adj[i].append(j)
        adj[j].append(i)
    out = set()
    for i, j, _ in bonds:
        seen, stack = {i}, [i]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if (u, v) in ((i, j), (j, i)) or v in seen:
                    continue
                seen.add(v)
                stack.append(v)
        if j in seen:
            out.update((i, j))
    return out


def parse_smiles(smiles, molecule_id=""):
    """Parse ``smiles`` into a :class:`MoleculeGraph`.

    Raises :class:`SmilesParseError` carrying the byte offset and reason.
    """
    graph = _Parser(smiles).parse()
    graph.molecule_id = molecule_id
    return graph


def encode_atom_features(atom, graph=None):
    """32-dim feature vector of ``atom`` (layout in the module docstring)."""
    x = np.zeros(FEATURE_DIM)
    x[ELEMENTS.index(atom.element) if atom.element in ELEMENTS else len(ELEMENTS)] = 1.0
    x[_DEGREE_OFF + (atom.degree if 0 <= atom.degree <= 5 else 5)] = 1.0
    c = atom.formal_charge
    x[_CHARGE_OFF + (c + 2 if -2 <= c <= 2 else 4)] = 1.0
    x[_AROM_OFF] = float(atom.aromatic)
    x[_H_OFF + (atom.hydrogens if 0 <= atom.hydrogens <= 4 else 4)] = 1.0
    x[_RING_OFF] = float(atom.in_ring)
    return x


def build_adjacency(graph):
    """Symmetric bond-weight matrix with a zero diagonal (no self-connection)."""
    a = np.zeros((graph.n_atoms, graph.n_atoms))
    for i, j, w in graph.bonds:
        a[i, j] = a[j, i] = w
    return a


def read_molecule_table(path):
    """Rows of ``(id, smiles, line_number)`` from a two-column TSV file."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                rows.append((None, line, lineno))
                continue
            rows.append((parts[0], parts[1].strip(), lineno))
    return rows


def write_molecule_table(path, molecules):
    """Write ``{id: smiles}`` (or ``(id, smiles)`` pairs) as a TSV table."""
    items = molecules.items() if hasattr(molecules, "items") else molecules
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# id\tsmiles\n")
        for mid, smi in items:
            fh.write(f"{mid}\t{smi}\n")
