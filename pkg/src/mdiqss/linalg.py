"""Dense Hermitian eigenvalues by cyclic complex Jacobi rotations."""

from __future__ import annotations

import numpy as np

from . import _backend

JACOBI_TOL = 1e-13


def eigvalsh_jacobi(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 60,
                    backend: str | None = None) -> np.ndarray:
    """Ascending eigenvalues of one Hermitian matrix (n, n) or a batch (m, n, n).

    Sweeps stop once the off-diagonal Frobenius norm falls below ``tol``.
    """
    a = np.asarray(a, dtype=np.complex128)
    single = a.ndim == 2
    batch = a[None] if single else a
    if batch.ndim != 3 or batch.shape[1] != batch.shape[2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    herm_err = np.max(np.abs(batch - np.conj(np.swapaxes(batch, 1, 2))), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(batch), initial=0.0)))
    if herm_err > 1e-12 * scale:
        raise ValueError(f"matrix is not Hermitian (max asymmetry {herm_err:.3g})")
    vals = _backend.get(backend).jacobi_eigvalsh(np.ascontiguousarray(batch), tol, max_sweeps)
    return vals[0] if single else vals
