"""Micro-benchmark of the hot kernels: numba backend vs pure numpy.

Run as ``python -m semshot.bench [--repeat N] [--classes N] [--batch B]``.
Reports per-call time for each kernel under both backends and the speedup.
The numba column only appears when numba is importable and not disabled via
SEMSHOT_NUMBA=0.
"""

import argparse
import time

import numpy as np

from . import kernels


def _workloads(n_classes: int, d_e: int, batch: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    scores = rng.standard_normal((n_classes, n_classes))
    soft = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
    logits = rng.standard_normal((n_classes, batch))
    labels = rng.integers(0, n_classes, size=batch).astype(np.int64)
    probs = np.exp(logits) / np.exp(logits).sum(axis=0)
    pre = rng.standard_normal((d, batch))
    graph = np.abs(rng.standard_normal((n_classes, n_classes)))
    graph /= graph.sum(axis=1, keepdims=True)
    transformed = rng.standard_normal((n_classes, d_e))
    param = rng.standard_normal((d_e, d))
    grad = rng.standard_normal((d_e, d))
    vel = np.zeros((d_e, d))
    return {
        "row_softmax": (scores,),
        "row_softmax_grad": (soft, scores),
        "ce_cols": (logits, labels),
        "ce_cols_grad": (probs, labels, 1.0),
        "relu": (pre,),
        "relu_grad": (np.maximum(pre, 0.0), pre),
        "mix_matmul": (graph, transformed),
        "sgd_update": (param, grad, vel, 0.02, 0.9, 1e-4),
    }


def _time_call(fn, args, repeat: int) -> float:
    fn(*args)  # warm (and jit-compile)
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def run(repeat: int = 200, n_classes: int = 21, d_e: int = 300,
        batch: int = 16, d: int = 64, seed: int = 0) -> list:
    rows = []
    loads = _workloads(n_classes, d_e, batch, d, seed)
    backends = list(kernels.IMPLEMENTATIONS)
    for name, args in loads.items():
        timings = {}
        for backend in backends:
            impl = kernels.IMPLEMENTATIONS[backend][name]
            call_args = tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)
            timings[backend] = _time_call(impl, call_args, repeat)
        rows.append((name, timings))
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--classes", type=int, default=21)
    ap.add_argument("--embed-dim", type=int, default=300)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--proj-dim", type=int, default=64)
    args = ap.parse_args(argv)

    rows = run(args.repeat, args.classes, args.embed_dim, args.batch, args.proj_dim)
    have_numba = "numba" in kernels.IMPLEMENTATIONS
    print(f"active backend: {kernels.BACKEND}")
    header = f"{'kernel':<18} {'numpy us':>10}"
    if have_numba:
        header += f" {'numba us':>10} {'speedup':>8}"
    print(header)
    for name, timings in rows:
        line = f"{name:<18} {timings['numpy'] * 1e6:>10.2f}"
        if have_numba:
            ratio = timings["numpy"] / timings["numba"] if timings["numba"] > 0 else float("inf")
            line += f" {timings['numba'] * 1e6:>10.2f} {ratio:>7.2f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
