"""Two-photon polarization state algebra.

States are plain complex numpy vectors over the product basis. For two
photons the amplitude order is (HH, HV, VH, VV); photon 1 is the most
significant tensor factor. Bell labels carry a phase index ``k`` so that
the four Bell states are ``(|HV> + i**k |VH>)/sqrt(2)``::

    k = 0  psi+      k = 1  phi+
    k = 2  psi-      k = 3  phi-

The diagonal encoders ``U_ab = diag(1, u)`` only ever multiply the VH
amplitude by a fourth root of unity, which is why the labels form a Z4 orbit.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

__all__ = [
    "BellLabel",
    "EncodingKeys",
    "ALL_KEYS",
    "local_op",
    "bell_vector",
    "apply_local",
    "classify",
    "transition",
    "transition_table",
    "same_up_to_phase",
    "ghz_plus",
    "ghz3_plus",
    "measure_ancilla",
]

SQRT_HALF = 1.0 / np.sqrt(2.0)
PHASE_TOL = 1e-9


class BellLabel(enum.IntEnum):
    """Bell state label; the integer value is the VH phase index ``k``."""

    PSI_PLUS = 0
    PHI_PLUS = 1
    PSI_MINUS = 2
    PHI_MINUS = 3

    @property
    def basis(self) -> int:
        """0 for the psi (X) family, 1 for the phi (Y) family."""
        return self.value & 1

    @property
    def sign(self) -> int:
        """0 for '+', 1 for '-'."""
        return self.value >> 1

    @classmethod
    def from_bits(cls, basis: int, sign: int) -> "BellLabel":
        return cls((basis & 1) | ((sign & 1) << 1))

    @property
    def symbol(self) -> str:
        return ("psi", "phi")[self.basis] + "+-"[self.sign]


class EncodingKeys(NamedTuple):
    """A party's (public, private) key pair selecting ``U_ab``."""

    a: int
    b: int

    @property
    def index(self) -> int:
        return 2 * self.a + self.b

    @classmethod
    def from_index(cls, index: int) -> "EncodingKeys":
        return cls((index >> 1) & 1, index & 1)


ALL_KEYS = tuple(EncodingKeys.from_index(i) for i in range(4))

# diag(1, u) entries on |V>; indexed by EncodingKeys.index
_V_PHASE = (1.0 + 0j, -1.0 + 0j, 1j, -1j)


def local_op(keys: EncodingKeys | tuple[int, int]) -> np.ndarray:
    """Diagonal of ``U_ab`` acting on (|H>, |V>)."""
    keys = EncodingKeys(*keys)
    if keys.a not in (0, 1) or keys.b not in (0, 1):
        raise ValueError(f"key bits must be 0 or 1, got {tuple(keys)}")
    return np.array([1.0 + 0j, _V_PHASE[keys.index]])


def bell_vector(label: BellLabel | int) -> np.ndarray:
    label = BellLabel(label)
    vec = np.zeros(4, dtype=complex)
    vec[1] = SQRT_HALF
    vec[2] = SQRT_HALF * 1j ** label.value
    return vec


def _check_normalized(state: np.ndarray, tol: float = 1e-9) -> None:
    norm = float(np.vdot(state, state).real)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized (norm^2 = {norm:.12g})")


def apply_local(state: np.ndarray, op: np.ndarray, photon: int) -> np.ndarray:
    """Apply a single-photon diagonal operator to photon 1 or 2 of a pair.

    ``op`` may be the 2-entry diagonal returned by :func:`local_op` or a full
    2x2 matrix.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (4,):
        raise ValueError("expected a two-photon amplitude vector of length 4")
    op = np.asarray(op, dtype=complex)
    if op.shape == (2,):
        op = np.diag(op)
    if photon == 1:
        full = np.kron(op, np.eye(2))
    elif photon == 2:
        full = np.kron(np.eye(2), op)
    else:
        raise ValueError(f"photon index must be 1 or 2, got {photon!r}")
    return full @ state


def same_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = PHASE_TOL) -> bool:
    """Equality of two state vectors modulo a global phase.

    Both vectors are rotated so that the largest-magnitude component of ``u``
    is real and positive, then compared entrywise.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    j = int(np.argmax(np.abs(u)))
    if abs(u[j]) < tol or abs(v[j]) < tol:
        return bool(np.allclose(u, v, atol=tol, rtol=0))
    u = u * (abs(u[j]) / u[j])
    v = v * (abs(v[j]) / v[j])
    return bool(np.max(np.abs(u - v)) <= tol)


def classify(state: np.ndarray) -> BellLabel | None:
    """Bell label of ``state`` up to global phase, or None if not a Bell state."""
    for label in BellLabel:
        if same_up_to_phase(bell_vector(label), state):
            return label
    return None


def transition(label: BellLabel | int, keys: EncodingKeys | tuple[int, int], photon: int = 1) -> BellLabel:
    """Label reached after applying ``U_ab`` to one photon of a Bell pair.

    On photon 1 the phase index moves by +j, on photon 2 by -j, where
    j = 0, 2, 1, 3 for U00, U01, U10, U11. The table is derived from the
    matrices, see :func:`transition_table`.
    """
    keys = EncodingKeys(*keys)
    return BellLabel(int(transition_table()[photon - 1, int(label), keys.index]))


@lru_cache(maxsize=None)
def _transition_table() -> np.ndarray:
    table = np.empty((2, 4, 4), dtype=np.int8)
    for photon in (1, 2):
        for label in BellLabel:
            for keys in ALL_KEYS:
                out = classify(apply_local(bell_vector(label), local_op(keys), photon))
                if out is None:  # pragma: no cover - diagonal unitaries never leave the orbit
                    raise AssertionError("encoding left the Bell orbit")
                table[photon - 1, label, keys.index] = out
    table.setflags(write=False)
    return table


def transition_table() -> np.ndarray:
    """``table[photon - 1, label, key_index]`` computed by matrix multiplication."""
    return _transition_table()


# --- multi-photon GHZ states -------------------------------------------------

def ghz_plus(n_photons: int) -> np.ndarray:
    """(|H...HV> + |V...VH>)/sqrt(2) on ``n_photons`` photons."""
    if n_photons < 2:
        raise ValueError("a GHZ state needs at least two photons")
    vec = np.zeros(2**n_photons, dtype=complex)
    vec[1] = SQRT_HALF  # H...HV
    vec[2**n_photons - 2] = SQRT_HALF  # V...VH
    return vec


def ghz3_plus() -> np.ndarray:
    return ghz_plus(3)


# Projectors onto the measured ancilla state, rows indexed by outcome bit.
# X: 0 -> |+>, 1 -> |->.  Y: 0 -> |-i>, 1 -> |+i>, so that the outcome bit
# equals the sign of the Bell state left on the remaining pair.
_ANCILLA_BASES = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF,
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) * SQRT_HALF,
}


def ancilla_projections(state: np.ndarray, basis: str) -> tuple[np.ndarray, np.ndarray]:
    """Outcome probabilities and normalized residual states for photon 1.

    Returns ``(probs, residuals)`` where ``residuals[m]`` is the state of the
    remaining photons given outcome bit ``m``.
    """
    try:
        kets = _ANCILLA_BASES[basis.upper()]
    except (KeyError, AttributeError):
        raise ValueError(f"ancilla basis must be 'X' or 'Y', got {basis!r}") from None
    state = np.asarray(state, dtype=complex)
    _check_normalized(state)
    split = state.reshape(2, -1)
    # <m| on photon 1: conjugate of the ket components
    unnorm = kets.conj() @ split
    probs = np.sum(np.abs(unnorm) ** 2, axis=1).real
    residuals = np.zeros_like(unnorm)
    for m in range(2):
        if probs[m] > 0:
            residuals[m] = unnorm[m] / np.sqrt(probs[m])
    return probs, residuals


def measure_ancilla(state: np.ndarray, basis: str, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Measure photon 1 in the X or Y basis and return (outcome bit, residual)."""
    probs, residuals = ancilla_projections(state, basis)
    outcome = int(rng.random() >= probs[0])
    return outcome, residuals[outcome]
