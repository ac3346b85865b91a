"""Compare the compiled and numpy backends of the deviation product.

Usage: ``python benchmarks/bench_kernels.py [--n-side 16] [--members 32]``
"""
import argparse
import time

import numpy as np

from emlmc import fem, kernels
from emlmc.mesh import build_single


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-side", type=int, default=16)
    p.add_argument("--members", type=int, default=32)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args(argv)

    space = fem.FeSpace(build_single(np.sqrt(2.0) / args.n_side), 2)
    rng = np.random.default_rng(0)
    pts = space.quad_points(fem.ASSEMBLY_RULE)
    vals = rng.standard_normal((len(pts), args.members))
    data = np.ascontiguousarray(fem.stiffness_data(space, vals))
    X = rng.standard_normal((space.n_dof, args.members))
    run = {b: (lambda b=b: kernels.shared_pattern_spmm(space.indptr, space.indices,
                                                       data, X, backend=b))
           for b in ("numpy", "cython") if b == "numpy" or kernels.BACKEND == "cython"}
    # loop of scipy products, what the kernel replaces
    mats = [space.matrix(data[:, j]) for j in range(args.members)]
    run["scipy-loop"] = lambda: np.column_stack([A @ X[:, j] for j, A in enumerate(mats)])

    ref = run["scipy-loop"]()
    print(f"n_dof={space.n_dof} nnz={space.nnz} members={args.members}")
    for name, fn in run.items():
        err = np.abs(fn() - ref).max()
        print(f"{name:>11}: {_time(fn, args.repeat) * 1e3:8.3f} ms  max diff {err:.1e}")


if __name__ == "__main__":
    main()
