"""Compare the compiled kernels with the pure-numpy fallback.

Run from the repository root after an editable install:

    python benchmarks/bench_kernels.py [--n-weeks 2000] [--n-trees 50] [--repeat 3]

Both backends must produce identical forests; the script checks this before timing.
"""
import argparse
import timeit

import numpy as np

from meterxai import _kernels, _kernels_py, forest

try:
    from meterxai import _kernels_ext
except ImportError:
    _kernels_ext = None


def use(backend):
    mod = _kernels_ext if backend == "compiled" else _kernels_py
    _kernels.best_split = mod.best_split
    _kernels.predict_forest = mod.predict_forest


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-weeks", type=int, default=2000)
    ap.add_argument("--n-features", type=int, default=93)
    ap.add_argument("--n-trees", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels_ext is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.n_weeks, args.n_features))
    y = X[:, 0] + 0.5 * X[:, 1] * X[:, 2] + rng.normal(scale=0.5, size=args.n_weeks) > 0
    w = rng.integers(0, 3, args.n_weeks).astype(np.float64)
    idx = np.flatnonzero(w > 0).astype(np.intp)
    order = rng.permutation(args.n_features).astype(np.intp)
    mtry = int(np.sqrt(args.n_features))
    yf = y.astype(np.float64)

    models = {}
    for backend in ("compiled", "python"):
        use(backend)
        models[backend] = forest.train_forest(X, y, n_trees=args.n_trees, seed=1)
    fields = ("feature", "threshold", "left", "right", "value", "roots")
    same = all(np.array_equal(getattr(models["compiled"], f), getattr(models["python"], f)) for f in fields)
    print(f"data: {args.n_weeks} rows x {args.n_features} features, {args.n_trees} trees; identical output: {same}")

    cases = {
        "best_split (root node)": lambda mod: mod.best_split(X, yf, w, idx, order, mtry),
        "train_forest": lambda mod: forest.train_forest(X, y, n_trees=args.n_trees, seed=1),
        "predict_proba": lambda mod: forest.predict_proba(models["python"], X),
    }
    print(f"{'kernel':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases.items():
        times = {}
        for backend, mod in (("compiled", _kernels_ext), ("python", _kernels_py)):
            use(backend)
            number = 1 if name == "train_forest" else 5
            times[backend] = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
        print(f"{name:<24}{times['compiled']:>12.4f}{times['python']:>12.4f}{times['python'] / times['compiled']:>9.1f}x")
    use("compiled")


if __name__ == "__main__":
    main()
