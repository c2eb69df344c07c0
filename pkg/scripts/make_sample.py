"""Regenerate the bundled 200-row CCI sample (synthetic chemicals, STITCH layout)."""

from pathlib import Path

import numpy as np

from gognn.chem import write_molecule_table
from gognn.data import STITCH_HEADER, synth_generate

OUT = Path(__file__).resolve().parents[1] / "src" / "gognn" / "data"


def main(rows=200, seed=11):
    ds = synth_generate(60, 3, seed=seed)
    rng = np.random.default_rng(seed)
    linked = {tuple(e) for e in ds.edges.tolist()}
    pos = ds.edges[rng.choice(len(ds.edges), size=rows * 3 // 4, replace=False)]
    non = [(i, j) for i in range(ds.n_nodes) for j in range(i + 1, ds.n_nodes)
           if (i, j) not in linked]
    neg = np.array(non)[rng.choice(len(non), size=rows - len(pos), replace=False)]
    lines = []
    for (i, j), score in zip(pos, rng.integers(900, 1000, size=len(pos))):
        lines.append((i, j, score))
    for (i, j), score in zip(neg, rng.integers(150, 900, size=len(neg))):
        lines.append((i, j, score))
    lines = [lines[k] for k in rng.permutation(len(lines))]
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "cci_sample_links.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(STITCH_HEADER) + "\n")
        for i, j, score in lines:
            fh.write(f"{ds.ids[i]}\t{ds.ids[j]}\t0\t0\t0\t{score}\t{score}\n")
    write_molecule_table(OUT / "cci_sample_molecules.tsv", zip(ds.ids, ds.smiles))


if __name__ == "__main__":
    main()
