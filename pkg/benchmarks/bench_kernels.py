"""Time the hot kernels under each available backend.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 100] [--K 300] [--g 3]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from penclust._core import available_backends, kernels, use_backend


def _inputs(n: int, K: int, g: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, K))
    mu = rng.normal(0, 0.5, (g, K))
    s2 = rng.uniform(0.5, 2.0, (g, K))
    tau = rng.dirichlet(np.ones(g), size=n)
    T = tau.sum(axis=0)
    b = T / 2.0
    c = np.ascontiguousarray(b[:, None] * rng.uniform(0.3, 2.5, (g, K)))
    size = 5
    order = np.arange(K, dtype=np.int64)
    starts = np.arange(0, K + 1, size, dtype=np.int64)
    if starts[-1] != K:
        starts = np.append(starts, K)
    L = 2.0 * np.sqrt(np.diff(starts).astype(np.float64))
    return dict(X=X, mu=mu, s2=s2, tau=tau, log_pi=np.log(T / n), T=T, b=b, c=c,
                sx=np.ascontiguousarray(tau.T @ X), order=order, starts=starts, L=L)


def _cases(d: dict) -> dict:
    bb = np.ascontiguousarray(np.broadcast_to(d["b"][:, None], d["c"].shape))
    lam = np.full(d["c"].shape, 3.0)
    return {
        "e_step": lambda: kernels.e_step(d["X"], d["log_pi"], d["mu"], d["s2"]),
        "centered_sq": lambda: kernels.centered_sq(d["X"], d["tau"], d["mu"]),
        "var_update_one": lambda: kernels.var_update_one(bb, d["c"], lam),
        "var_update_two": lambda: kernels.var_update_two(bb, d["c"], lam),
        "group_means_batch": lambda: kernels.group_means_batch(
            d["sx"], d["T"], d["s2"], d["L"], d["order"], d["starts"]),
        "group_variances_batch": lambda: kernels.group_variances_batch(
            d["b"], d["c"], np.ones_like(d["c"]), d["L"], d["order"], d["starts"]),
    }


def _time(fn, repeat: int) -> float:
    fn()  # warm up
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--K", type=int, default=300)
    ap.add_argument("--g", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    data = _inputs(args.n, args.K, args.g)
    backends = available_backends()
    results: dict[str, dict[str, float]] = {}
    for name in backends:
        previous = use_backend(name)
        try:
            results[name] = {k: _time(fn, args.repeat) for k, fn in _cases(data).items()}
        finally:
            use_backend(previous)

    print(f"n={args.n} K={args.K} g={args.g}, best of {args.repeat}, seconds per call")
    header = f"{'kernel':<24}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speed-up':>11}"
    print(header)
    for kernel in results[backends[0]]:
        row = f"{kernel:<24}" + "".join(f"{results[b][kernel]:>14.3e}" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][kernel] / results['cython'][kernel]:>10.1f}x"
        print(row)
    if len(backends) == 1:
        print("compiled backend not built; run `python setup.py build_ext --inplace` to compare")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
