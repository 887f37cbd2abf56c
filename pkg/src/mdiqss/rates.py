"""Closed-form key-rate analytics.

Conventions: ``e_x``/``e_y`` are the per-stage X/Y flip probabilities of the
two noisy transmission stages, the channel fidelity is P = 1 - e_x, and the
end-to-end error is e = 1.5 e_x + 0.5 e_y - e_x^2 - e_x e_y. The rate is

    R = Q [1 - h(e_tot)] - Q_eve h(e_x + e_y),

where h(e_x + e_y) = h(1 - sqrt(1 - 2e)) whenever e_x = e_y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bsa import DetectorParams, coincidence_efficiency
from .channel import Topology, end_to_end_error, transmittance
from .linalg import eigvalsh_jacobi

__all__ = [
    "SystemParams",
    "GramSpectrum",
    "RateCurve",
    "NoBracketError",
    "binary_entropy",
    "holevo_bound",
    "gram_matrix",
    "gram_spectrum",
    "gram_holevo",
    "coincidence_rate",
    "key_rate",
    "dark_count_errors",
    "total_error",
    "key_rate_with_dark_counts",
    "max_distance",
    "threshold_fidelity",
    "rate_curve",
]

MAX_BRACKET_KM = 1e4
DISTANCE_RESOLUTION_KM = 0.1
THRESHOLD_RESOLUTION = 1e-4


class NoBracketError(ValueError):
    """Root finding found no sign change."""


@dataclass(frozen=True)
class SystemParams:
    eta_d: float = 0.93
    eta_D: float = 0.863
    p_d: float = 1e-7
    alpha: float = 0.19
    e_x: float = 0.0
    e_y: float = 0.0
    topology: Topology = Topology.SYMMETRIC
    q_eve: float | None = None  # None means Q_eve = Q

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        self.detectors  # validates detector ranges
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0 dB/km, got {self.alpha}")
        _check_errors(self.e_x, self.e_y)
        if self.q_eve is not None and not 0.0 <= self.q_eve <= 1.0:
            raise ValueError(f"q_eve must lie in [0, 1], got {self.q_eve}")

    @classmethod
    def from_fidelity(cls, fidelity: float, **kwargs) -> "SystemParams":
        """Unbiased channel with e_x = e_y = 1 - fidelity."""
        if not 0.0 <= 1.0 - fidelity <= 0.25:
            raise ValueError(f"fidelity must lie in [0.75, 1], got {fidelity}")
        e = 1.0 - fidelity
        return cls(e_x=e, e_y=e, **kwargs)

    @property
    def fidelity(self) -> float:
        return 1.0 - self.e_x

    @property
    def detectors(self) -> DetectorParams:
        return DetectorParams(eta_d=self.eta_d, p_d=self.p_d, eta_D=self.eta_D)

    @property
    def channel_error(self) -> float:
        return end_to_end_error(self.e_x, self.e_y)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


def _check_errors(e_x: float, e_y: float) -> None:
    if e_x < 0 or e_y < 0 or e_x + e_y > 0.5:
        raise ValueError(f"need e_x, e_y >= 0 and e_x + e_y <= 1/2, got ({e_x}, {e_y})")


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def holevo_bound(e_x: float, e_y: float, q_eve: float = 1.0) -> float:
    """Upper bound on Eve's information, q_eve * h(e_x + e_y)."""
    _check_errors(e_x, e_y)
    return q_eve * binary_entropy(e_x + e_y)


# --- Gram-matrix spectrum ---------------------------------------------------------

@dataclass(frozen=True)
class GramSpectrum:
    beta: float
    eigenvalues: np.ndarray = field(repr=False)
    entropy: float

    @staticmethod
    def closed_form(beta: float) -> np.ndarray:
        return np.sort([0.0] * 4 + [(1 - beta) / 4] * 2 + [(1 + beta) / 4] * 2)


def gram_matrix(beta: float, alpha: float = 0.0) -> np.ndarray:
    """8x8 Gram matrix of Eve's post-attack ensemble (alpha = 0 in the analysis)."""
    a, b = alpha, beta
    t = np.array([[2, 0, 2 * a, -2 * b],
                  [0, 2, -2 * b, 2 * a],
                  [2 * a, -2 * b, 2, 0],
                  [-2 * b, 2 * a, 0, 2]], dtype=complex)
    A = 1 + b - 1j * a
    B = -a + 1j - 1j * b
    C = a + 1j - 1j * b
    D = -1 - b - 1j * a
    o = np.array([[A, B, C, D],
                  [B, A, D, C],
                  [C, D, A, B],
                  [D, C, B, A]])
    return np.block([[t, o], [o.conj().T, t]]) / 16.0


def _entropy_bits(eigenvalues: np.ndarray) -> np.ndarray:
    lam = np.clip(np.asarray(eigenvalues), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(lam > 0, -lam * np.log2(np.where(lam > 0, lam, 1.0)), 0.0)
    return terms.sum(axis=-1)


def gram_spectrum(beta: float, alpha: float = 0.0, backend: str | None = None) -> GramSpectrum:
    if not -1.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [-1, 1], got {beta}")
    vals = eigvalsh_jacobi(gram_matrix(beta, alpha), backend=backend)
    return GramSpectrum(float(beta), vals, float(_entropy_bits(vals)))


def gram_holevo(e_x: float, e_y: float, n_beta: int = 21,
                backend: str | None = None) -> tuple[GramSpectrum, float]:
    """Maximize the Gram-matrix entropy over the allowed beta interval.

    Returns the spectrum at the maximizing beta and S_max - 1.
    """
    _check_errors(e_x, e_y)
    lo = 1.0 - 2.0 * (e_x + e_y)
    hi = min(1.0 + 2.0 * e_x - 2.0 * e_y, 1.0)
    betas = np.unique(np.concatenate([[lo, hi], np.linspace(lo, hi, n_beta)]))
    vals = eigvalsh_jacobi(np.stack([gram_matrix(b) for b in betas]), backend=backend)
    entropies = _entropy_bits(vals)
    best = int(np.argmax(entropies))
    spectrum = GramSpectrum(float(betas[best]), vals[best], float(entropies[best]))
    return spectrum, spectrum.entropy - 1.0


# --- rates ----------------------------------------------------------------------

def _check_length(length_km: float) -> None:
    if not length_km >= 0.0:
        raise ValueError(f"distance must be >= 0 km, got {length_km}")


def coincidence_rate(params: SystemParams, length_km: float) -> float:
    """Q = eta_0, the signal coincidence probability per pair."""
    _check_length(length_km)
    return coincidence_efficiency(params.detectors, transmittance(params.alpha, length_km), params.topology)


def _eve_term(params: SystemParams, q: float) -> float:
    return holevo_bound(params.e_x, params.e_y, q if params.q_eve is None else params.q_eve)


def key_rate(params: SystemParams, length_km: float) -> float:
    """Rate without dark counts."""
    q = coincidence_rate(params, length_km)
    return q * (1.0 - binary_entropy(params.channel_error)) - _eve_term(params, q)


def dark_count_errors(params: SystemParams, length_km: float) -> tuple[float, float]:
    """(e_d1, e_d2): two dark clicks, and one dark click plus one signal photon."""
    _check_length(length_km)
    p = params.p_d
    e_d1 = 4.0 * p * p * (1.0 - p) ** 2
    # per-photon transmittance over the photon's whole path
    t = transmittance(params.alpha, params.topology.segments_per_photon * length_km)
    e_d2 = 4.0 * t * params.eta_D * params.eta_d * p * (1.0 - p) ** 2 * (1.0 - t * params.eta_d)
    return e_d1, e_d2


def total_error(params: SystemParams, length_km: float, e: float | None = None) -> float:
    """(e_d1 + e_d2/2 + e Q) / (e_d1 + e_d2 + Q)."""
    if e is None:
        e = params.channel_error
    e_d1, e_d2 = dark_count_errors(params, length_km)
    if e_d1 == 0.0 and e_d2 == 0.0:
        return e
    q = coincidence_rate(params, length_km)
    den = e_d1 + e_d2 + q
    if den == 0.0:
        raise ZeroDivisionError("no coincidences and no dark counts: total error undefined")
    return (e_d1 + 0.5 * e_d2 + e * q) / den


def key_rate_with_dark_counts(params: SystemParams, length_km: float) -> float:
    """Rate with h(e) replaced by h(e_tot); the Eve term keeps the channel errors."""
    q = coincidence_rate(params, length_km)
    e_tot = total_error(params, length_km)
    return q * (1.0 - binary_entropy(e_tot)) - _eve_term(params, q)


def _bisect(f, lo: float, hi: float, resolution: float) -> float:
    """Root of f with f(lo) > 0 and f(hi) < 0."""
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def max_distance(params: SystemParams, resolution: float = DISTANCE_RESOLUTION_KM,
                 scan_step_km: float = 1.0) -> float:
    """First distance where the dark-count rate turns negative.

    The bracket comes from a forward scan in fixed steps, not doubling: far
    beyond the limit e_tot drifts toward 1 as two-dark-click events dominate,
    so R creeps back above 0 and a coarse bracket can skip the crossing.
    """
    rate = lambda L: key_rate_with_dark_counts(params, L)  # noqa: E731
    if not rate(0.0) > 0.0:
        raise NoBracketError(f"rate at 0 km is not positive ({rate(0.0):.3g})")
    lo = 0.0
    while True:
        hi = min(lo + scan_step_km, MAX_BRACKET_KM)
        if rate(hi) < 0.0:
            return _bisect(rate, lo, hi, resolution)
        if hi >= MAX_BRACKET_KM:
            raise NoBracketError(f"rate stays non-negative up to {MAX_BRACKET_KM:g} km")
        lo = hi


def threshold_fidelity(params: SystemParams | None = None,
                       resolution: float = THRESHOLD_RESOLUTION) -> float:
    """Fidelity 1 - e_x at which the 0 km rate vanishes (e_x = e_y)."""
    if params is None:
        params = SystemParams(eta_d=1.0, eta_D=1.0, p_d=0.0)

    def rate(e):
        return key_rate_with_dark_counts(params.with_(e_x=e, e_y=e), 0.0)

    lo, hi = 0.0, 0.25
    if not (rate(lo) > 0.0 and rate(hi) < 0.0):
        raise NoBracketError("rate does not change sign for e_x in [0, 0.25]")
    return 1.0 - _bisect(rate, lo, hi, resolution)


@dataclass
class RateCurve:
    length_km: np.ndarray
    rate_raw: np.ndarray
    e_tot: np.ndarray
    q: np.ndarray
    params: SystemParams

    @property
    def rate_clamped(self) -> np.ndarray:
        return np.maximum(self.rate_raw, 0.0)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.length_km.tolist(), self.rate_clamped.tolist()))


def rate_curve(params: SystemParams, grid_km) -> RateCurve:
    grid = np.asarray(grid_km, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("distance grid must be a nonempty 1-d sequence")
    return RateCurve(
        grid,
        np.array([key_rate_with_dark_counts(params, L) for L in grid]),
        np.array([total_error(params, L) for L in grid]),
        np.array([coincidence_rate(params, L) for L in grid]),
        params,
    )
