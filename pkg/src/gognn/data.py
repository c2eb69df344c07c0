"""Interaction datasets: file ingestion, splits and the synthetic generator.

File formats are tab-separated. CCI links follow the STITCH detailed export
(header row, two chemical ids first, integer combined_score last). DDI
triples are ``drug1 drug2 side_effect_id``. Molecules come from a two-column
``id smiles`` table. Synthetic datasets dump to the same formats.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import parse_smiles, read_molecule_table, write_molecule_table
from .errors import ContractError, DataError, SmilesParseError

log = logging.getLogger(__name__)

MOTIFS = ("C(=O)O", "N", "S", "Cl", "c1ccccc1", "C#N", "P(=O)(O)O", "Br")
STITCH_HEADER = ("chemical1", "chemical2", "similarity", "experimental", "database",
                 "textmining", "combined_score")


@dataclass
class Dataset:
    """Molecules (in node order) and positive interactions as node indices.

    ``edges`` holds (i, j) rows for CCI and (i, r, j) rows for DDI. Undirected
    interactions are stored once with i < j.
    """

    task: str
    ids: list
    smiles: list
    graphs: list
    edges: np.ndarray
    relation_count: int = 0
    relation_names: list = field(default_factory=list)
    threshold: int = None
    stats: dict = field(default_factory=dict)
    groups: list = None

    @property
    def n_nodes(self):
        return len(self.ids)

    @property
    def molecules(self):
        return dict(zip(self.ids, self.graphs))

    def __len__(self):
        return len(self.edges)

    def pairs(self, rows=None):
        """(i, j) endpoints of all (or the selected) interactions."""
        e = self.edges if rows is None else self.edges[rows]
        return e[:, [0, 1]] if self.task == "cci" else e[:, [0, 2]]

    def relations(self, rows=None):
        if self.task == "cci":
            return None
        e = self.edges if rows is None else self.edges[rows]
        return e[:, 1]

    def summary(self):
        out = {"task": self.task, "molecules": self.n_nodes, "edges": len(self)}
        if self.task == "ddi":
            out["relations"] = self.relation_count
        return out


# ---------------------------------------------------------------- loading

def _fail(strict, stats, key, message):
    if strict:
        raise DataError(message)
    stats[key] = stats.get(key, 0) + 1
    log.warning("skipped: %s", message)


def load_molecules(path, strict=True, stats=None):
    """{id: (smiles, MoleculeGraph)} from a molecule table."""
    stats = stats if stats is not None else {}
    stats.setdefault("unparseable_molecules", 0)
    out = {}
    for mid, smi, lineno in read_molecule_table(path):
        if mid is None:
            _fail(strict, stats, "malformed_rows", f"{path}:{lineno}: expected 'id<TAB>smiles'")
            continue
        try:
            out[mid] = (smi, parse_smiles(smi, molecule_id=mid))
        except SmilesParseError as err:
            _fail(strict, stats, "unparseable_molecules", f"{path}:{lineno}: {err}")
    return out


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.strip() and not line.startswith("#"):
                yield lineno, line.split("\t")


def _assemble(task, pairs, molecules, stats, rel=None, names=(), threshold=None):
    """Index nodes by first appearance among the kept interactions."""
    index = {}
    for a, b in pairs:
        index.setdefault(a, len(index))
        index.setdefault(b, len(index))
    ids = list(index)
    ij = np.array([(index[a], index[b]) for a, b in pairs], dtype=np.int64).reshape(-1, 2)
    ij.sort(axis=1)
    edges = ij if rel is None else np.column_stack([ij[:, 0], rel, ij[:, 1]]).astype(np.int64)
    return Dataset(task, ids, [molecules[m][0] for m in ids], [molecules[m][1] for m in ids],
                   edges, relation_count=len(names), relation_names=list(names),
                   threshold=threshold, stats=stats)


def load_cci(links_file, molecules_file, threshold=950, strict=True):
    """Keep links with combined_score >= threshold whose chemicals both parse.

    ``strict`` raises a located DataError on malformed rows and unparseable
    SMILES; otherwise they are skipped and counted in ``dataset.stats``.
    """
    if not 0 <= threshold <= 999:
        raise ContractError(f"threshold must lie in [0, 999], got {threshold}")
    stats = {"rows": 0, "below_threshold": 0, "duplicates": 0, "self_links": 0,
             "missing_molecule": 0, "malformed_rows": 0}
    molecules = load_molecules(molecules_file, strict, stats)
    seen, pairs = set(), []
    header_checked = False
    for lineno, parts in _rows(links_file):
        if not header_checked:
            header_checked = True
            if parts[-1].strip() == "combined_score":
                continue
        stats["rows"] += 1
        if len(parts) < 3:
            _fail(strict, stats, "malformed_rows", f"{links_file}:{lineno}: expected >= 3 columns")
            continue
        try:
            score = int(parts[-1])
        except ValueError:
            score = -1
        if not 0 <= score <= 999:
            _fail(strict, stats, "malformed_rows",
                  f"{links_file}:{lineno}: combined_score must be an integer in [0, 999]")
            continue
        a, b = parts[0].strip(), parts[1].strip()
        if score < threshold:
            stats["below_threshold"] += 1
        elif a == b:
            stats["self_links"] += 1
        elif a not in molecules or b not in molecules:
            stats["missing_molecule"] += 1
        elif (min(a, b), max(a, b)) in seen:
            stats["duplicates"] += 1
        else:
            seen.add((min(a, b), max(a, b)))
            pairs.append((a, b))
    ds = _assemble("cci", pairs, molecules, stats, threshold=threshold)
    log.info("loaded %d chemicals, %d edges at threshold %d (%s)",
             ds.n_nodes, len(ds), threshold, stats)
    return ds


def load_ddi(triples_file, molecules_file, strict=True):
    """Typed drug-drug interactions; side-effect ids are remapped to 0..R-1
    in sorted order, the original names kept in ``relation_names``."""
    stats = {"rows": 0, "duplicates": 0, "self_links": 0, "missing_molecule": 0,
             "malformed_rows": 0}
    molecules = load_molecules(molecules_file, strict, stats)
    raw, seen = [], set()
    for lineno, parts in _rows(triples_file):
        stats["rows"] += 1
        if len(parts) != 3 or not all(p.strip() for p in parts):
            _fail(strict, stats, "malformed_rows",
                  f"{triples_file}:{lineno}: expected 'drug1<TAB>drug2<TAB>side_effect_id'")
            continue
        a, b, r = (p.strip() for p in parts)
        key = (min(a, b), r, max(a, b))
        if a == b:
            stats["self_links"] += 1
        elif a not in molecules or b not in molecules:
            stats["missing_molecule"] += 1
        elif key in seen:
            stats["duplicates"] += 1
        else:
            seen.add(key)
            raw.append((a, b, r))
    names = sorted({r for _, _, r in raw})
    rel_index = {r: k for k, r in enumerate(names)}
    rel = np.array([rel_index[r] for _, _, r in raw], dtype=np.int64)
    return _assemble("ddi", [(a, b) for a, b, _ in raw], molecules, stats, rel, names)


def save_dataset(ds, out_dir, prefix=None):
    """Dump molecules plus links/triples in the ingestion formats; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = prefix or ds.task
    mol_path = out / f"{prefix}_molecules.tsv"
    write_molecule_table(mol_path, zip(ds.ids, ds.smiles))
    if ds.task == "cci":
        path = out / f"{prefix}_links.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\t".join(STITCH_HEADER) + "\n")
            for i, j in ds.edges:
                fh.write(f"{ds.ids[i]}\t{ds.ids[j]}\t0\t0\t0\t0\t999\n")
    else:
        path = out / f"{prefix}_triples.tsv"
        names = ds.relation_names or [str(r) for r in range(ds.relation_count)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# drug1\tdrug2\tside_effect_id\n")
            for i, r, j in ds.edges:
                fh.write(f"{ds.ids[i]}\t{ds.ids[j]}\t{names[r]}\n")
    return path, mol_path


def load_dataset(path, molecules_file, task, threshold=950, strict=True):
    if task == "cci":
        return load_cci(path, molecules_file, threshold, strict)
    if task == "ddi":
        return load_ddi(path, molecules_file, strict)
    raise ContractError(f"unknown task {task!r}")


# ---------------------------------------------------------------- splits

@dataclass(frozen=True)
class Split:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int

    def part(self, name):
        if name not in ("train", "valid", "test"):
            raise ContractError(f"unknown split part {name!r}")
        return getattr(self, name)


def parse_ratios(text):
    """'8:1:1' or (0.8, 0.1, 0.1) -> normalised tuple."""
    parts = [float(p) for p in text.split(":")] if isinstance(text, str) else list(text)
    if not 2 <= len(parts) <= 3 or min(parts) <= 0:
        raise ContractError(f"ratios must be 2 or 3 positive numbers, got {text!r}")
    total = sum(parts)
    return tuple(p / total for p in parts)


def split(dataset, ratios, seed):
    """Seeded shuffle, then a contiguous partition at rounded cumulative ratios.

    Two ratios give train/test (empty validation); three give train/valid/test.
    """
    n = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    ratios = tuple(ratios)
    if len(ratios) not in (2, 3) or min(ratios) <= 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ContractError(f"ratios must be 2 or 3 positive numbers summing to 1, got {ratios}")
    if n < len(ratios):
        raise ContractError(f"cannot split {n} edges into {len(ratios)} parts")
    perm = np.random.default_rng(seed).permutation(n)
    cuts = np.rint(np.cumsum(ratios) * n).astype(np.int64)
    cuts[-1] = n
    # every part keeps at least one element
    for k in range(len(cuts) - 1):
        cuts[k] = min(max(cuts[k], (cuts[k - 1] if k else 0) + 1), n - (len(cuts) - 1 - k))
    parts = np.split(perm, cuts[:-1])
    if len(parts) == 2:
        parts = [parts[0], np.zeros(0, dtype=np.int64), parts[1]]
    return Split(*parts, seed=seed)


# ---------------------------------------------------------------- synthetic data

def default_rules(n_groups, task="cci"):
    """Each group interacts with itself (DDI: one relation per group)."""
    return [(g, g) for g in range(n_groups)]


def rule_edges(groups, rules):
    """Brute-force: every (i, j), i < j, whose group sets satisfy a rule.

    Returns (i, r, j) rows where r indexes the matched rule; one row per
    matched rule.
    """
    out = []
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            for r, (a, b) in enumerate(rules):
                if (a in groups[i] and b in groups[j]) or (b in groups[i] and a in groups[j]):
                    out.append((i, r, j))
    return out


def _synth_smiles(rng, motifs):
    """Carbon backbone with each motif hung off a random backbone carbon."""
    length = int(rng.integers(1, 5)) + len(motifs) - 1
    anchors = sorted(rng.choice(length, size=len(motifs), replace=False).tolist())
    parts = []
    for pos in range(length):
        parts.append("C")
        for k, a in enumerate(anchors):
            if a == pos:
                parts.append(f"({motifs[k]})")
    return "".join(parts)


def synth_generate(n_molecules, n_groups, rule_table=None, seed=0, task="cci",
                   p_two_motifs=0.1):
    """Random small molecules carrying 1-2 planted motifs ("functional groups").

    Molecules i and j interact iff some rule (a, b) pairs a group of i with a
    group of j. In DDI mode each rule is its own relation type.

    ``p_two_motifs`` is the chance a molecule carries a second motif. Every
    such molecule bridges two groups, so large values make the interaction
    graph close to complete (about 65% density at 0.5 with three groups).
    """
    if n_groups < 2:
        raise ContractError("need at least 2 groups")
    if n_groups > len(MOTIFS):
        raise ContractError(f"at most {len(MOTIFS)} groups are available")
    rules = list(rule_table) if rule_table is not None else default_rules(n_groups, task)
    for a, b in rules:
        if not (0 <= a < n_groups and 0 <= b < n_groups):
            raise ContractError(f"rule {(a, b)} refers to a group outside [0, {n_groups})")
    rng = np.random.default_rng(seed)
    groups, smiles = [], []
    for _ in range(n_molecules):
        k = 2 if rng.random() < p_two_motifs else 1
        g = sorted(rng.choice(n_groups, size=k, replace=False).tolist())
        groups.append(frozenset(g))
        smiles.append(_synth_smiles(rng, [MOTIFS[x] for x in g]))
    ids = [f"SYN{k:05d}" for k in range(n_molecules)]
    graphs = [parse_smiles(s, molecule_id=m) for m, s in zip(ids, smiles)]
    triplets = rule_edges(groups, rules)
    if task == "cci":
        edges = np.array(sorted({(i, j) for i, _, j in triplets}), dtype=np.int64).reshape(-1, 2)
        return Dataset("cci", ids, smiles, graphs, edges, groups=groups,
                       stats={"rules": rules})
    if task == "ddi":
        edges = np.array(triplets, dtype=np.int64).reshape(-1, 3)
        names = [f"G{a}-G{b}" for a, b in rules]
        return Dataset("ddi", ids, smiles, graphs, edges, relation_count=len(rules),
                       relation_names=names, groups=groups, stats={"rules": rules})
    raise ContractError(f"unknown task {task!r}")
