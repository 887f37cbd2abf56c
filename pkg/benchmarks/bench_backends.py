"""Compare the compiled and numpy kernel backends.

Checks that both produce identical Monte Carlo transcripts and agreeing
eigenvalues, then reports timings::

    python benchmarks/bench_backends.py --rounds 1000000
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from mdiqss import _backend, protocol, rates
from mdiqss.bsa import DetectorParams
from mdiqss.linalg import eigvalsh_jacobi


def _best_of(fn, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=1_000_000)
    ap.add_argument("--matrices", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if "compiled" not in _backend.available():
        print("compiled backend not built; nothing to compare")
        return 1

    links = protocol.build_links(3, length_km=10.0, e_x=0.02, e_y=0.02)
    det = DetectorParams(p_d=1e-4)
    rng = np.random.default_rng(7)
    h = rng.normal(size=(args.matrices, 8, 8)) + 1j * rng.normal(size=(args.matrices, 8, 8))
    herm = h + np.conj(np.swapaxes(h, 1, 2))
    betas = np.linspace(-1, 1, args.matrices)
    grams = np.stack([rates.gram_matrix(b) for b in betas])

    timings, outputs = {}, {}
    for name in ("python", "compiled"):
        t_mc, batch = _best_of(lambda: protocol.simulate(args.rounds, 3, links, det, seed=1, backend=name),
                               args.repeat)
        t_eig, vals = _best_of(lambda: eigvalsh_jacobi(herm, backend=name), args.repeat)
        t_gram, _ = _best_of(lambda: eigvalsh_jacobi(grams, backend=name), args.repeat)
        timings[name] = (t_mc, t_eig, t_gram)
        outputs[name] = (batch, vals)

    a, b = outputs["python"][0], outputs["compiled"][0]
    same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("keys", "outcome", "pattern", "nsig"))
    eig_dev = float(np.max(np.abs(outputs["python"][1] - outputs["compiled"][1])))
    ref_dev = float(np.max(np.abs(outputs["compiled"][1] - np.linalg.eigvalsh(herm))))

    print(f"{'kernel':<28}{'python [s]':>12}{'compiled [s]':>14}{'speedup':>10}")
    labels = (f"monte carlo ({args.rounds} rounds)", f"jacobi random 8x8 (x{args.matrices})",
              f"jacobi gram 8x8 (x{args.matrices})")
    for i, label in enumerate(labels):
        tp, tc = timings["python"][i], timings["compiled"][i]
        print(f"{label:<28}{tp:>12.3f}{tc:>14.3f}{tp / tc:>9.1f}x")
    print(f"transcripts identical: {same}")
    print(f"eigenvalues: backend difference {eig_dev:.1e}, deviation from LAPACK {ref_dev:.1e}")
    return 0 if same and eig_dev < 1e-10 and ref_dev < 1e-10 else 1


if __name__ == "__main__":
    sys.exit(main())
