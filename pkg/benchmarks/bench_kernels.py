"""Time the compiled kernels against the numpy fallback on CCI-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Also runs one training epoch of the default model on a synthetic dataset
under each backend.
"""

import argparse
import json
import timeit

import numpy as np

from gognn import kernels


def _cases(rng):
    n_nodes, n_arcs, d = 8000, 70000, 256
    seg = np.sort(rng.integers(0, n_nodes, n_arcs))
    ptr = np.concatenate([[0], np.cumsum(np.bincount(seg, minlength=n_nodes))])
    vals = rng.normal(size=(n_arcs, d))
    scores = rng.normal(size=n_arcs)
    grad = rng.normal(size=n_arcs)
    cols = rng.integers(0, n_nodes, n_arcs)
    x = rng.normal(size=(n_nodes, d))
    weights = rng.random(n_arcs)
    # molecule-sized segments for pooling: ~25 atoms each
    atoms = rng.integers(8, 40, 4000)
    aptr = np.concatenate([[0], np.cumsum(atoms)])
    ascores = rng.normal(size=int(aptr[-1]))
    soft = kernels.segment_softmax(scores, ptr)
    return {
        "segment_sum": lambda: kernels.segment_sum(vals, seg, n_nodes),
        "csr_matmul": lambda: kernels.csr_matmul(ptr, cols, weights, x, n_nodes),
        "segment_softmax": lambda: kernels.segment_softmax(scores, ptr),
        "segment_softmax_backward": lambda: kernels.segment_softmax_backward(soft, grad, ptr),
        "segment_topk": lambda: kernels.segment_topk(ascores, aptr, 0.5),
    }


def _epoch():
    from gognn.data import parse_ratios, split, synth_generate
    from gognn.model import TrainConfig
    from gognn.train import train

    ds = synth_generate(60, 3, seed=7)
    sp = split(ds, parse_ratios("8:1:1"), 0)
    return lambda: train(TrainConfig(epochs=1), ds, sp)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    cases = _cases(np.random.default_rng(0))
    cases["train_epoch"] = _epoch()
    results = {}
    for name, fn in cases.items():
        row = {}
        for backend in backends:
            kernels.set_backend(backend)
            fn()  # warm up
            row[backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        results[name] = row
    kernels.set_backend(backends[-1])

    if args.json:
        print(json.dumps(results, indent=2))
        return
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, row in results.items():
        line = f"{name:<26}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in row:
            line += f"  {row['python'] / row['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
