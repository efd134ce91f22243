"""Time the compiled kernels against the pure-Python fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from irml import _kernels
from irml._kernels import _pykernels
from irml.synthetic import fb_like


def cases(rng):
    kg = fb_like(2000, 0)
    o, i = kg.out_index, kg.in_index
    pairs = rng.integers(kg.n_entities, size=(200, 2))
    cb = rng.normal(size=(2000, 16))
    pts = rng.normal(size=(500, 16))
    ent, rel = rng.normal(size=(2000, 16)), rng.normal(size=(40, 16))
    pos = np.column_stack([rng.integers(2000, size=4096), rng.integers(40, size=4096),
                           rng.integers(2000, size=4096)]).astype(np.int64)
    neg = pos.copy()
    neg[:, 2] = rng.integers(2000, size=4096)

    def bfs(mod):
        for s, d in pairs:
            mod.bidirectional_bfs(*o, *i, int(s), int(d), 4)

    def nearest(mod):
        mod.nearest_codewords(pts, cb)

    def margin(mod):
        mod.margin_grad_accumulate(ent, rel, pos, neg, 1.0, np.zeros_like(ent),
                                   np.zeros_like(rel))

    return {"bidirectional_bfs x200": bfs, "nearest_codewords 500x2000": nearest,
            "margin_grad_accumulate 4096": margin}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.compiled is None:
        print("compiled kernels are not built; only the Python timings are shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _kernels.compiled is None:
            print(f"{name:32s} {tp:10.2f} {'-':>10s} {'-':>8s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_kernels.compiled), number=1,
                               repeat=args.repeat)) * 1e3
        print(f"{name:32s} {tp:10.2f} {tc:10.2f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
