"""Vectorized numpy implementations of the hot kernels.

These are the reference fallback for the compiled ``_ckernels`` module and
must stay bit-identical to it for the Monte Carlo kernel. Every random draw
is a pure function of (seed key, round index, slot), so chunking and worker
count never change the result.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
TWO_NEG53 = 1.0 / 9007199254740992.0

EV_ENCODE = 0
EV_SEGMENT = 1
EV_INTERCEPT = 2

# detector bit masks, D1..D4 -> bits 0..3
D1, D2, D3, D4 = 1, 2, 4, 8
OUT_PSI_PLUS, OUT_PSI_MINUS, OUT_INCONCLUSIVE = 0, 1, 2
BSA_SLOTS = 9

_U64 = (1 << 64) - 1


def seed_key(seed: int) -> int:
    """SplitMix64 finalizer of the master seed (python int arithmetic)."""
    z = (seed + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def raw_draws(key: int, rounds: np.ndarray, nslots: int, slot: int) -> np.ndarray:
    idx = rounds * np.uint64(nslots) + np.uint64(slot + 1)
    return _mix(np.uint64(key) + idx * GOLDEN)


def uniforms(key: int, rounds: np.ndarray, nslots: int, slot: int) -> np.ndarray:
    return (raw_draws(key, rounds, nslots, slot) >> np.uint64(11)).astype(np.float64) * TWO_NEG53


def resolve_clicks(alive1, alive2, label, u, eta_d, eta_D, p_d):
    """Vectorized click-level analyzer.

    ``u`` is a sequence of 9 uniform arrays in slot order:
    gate, ideal, signature, det1, det2, dark1..dark4.
    """
    gate = u[0] < eta_D
    odd = (label & 1).astype(bool)
    plus = np.where(odd, u[1] < 0.5, label == 0)
    first = u[2] < 0.5
    both = alive1 & alive2
    det1 = np.where(first, D1, D4)
    # photon 2 lands on D2/D3; the psi- signatures pair it the other way round
    swap = both & ~plus
    det2 = np.where(first ^ swap, D2, D3)
    hit1 = alive1 & gate & (u[3] < eta_d)
    hit2 = alive2 & gate & (u[4] < eta_d)
    pattern = np.where(hit1, det1, 0) | np.where(hit2, det2, 0)
    for d in range(4):
        pattern = pattern | np.where(u[5 + d] < p_d, 1 << d, 0)
    pattern = pattern.astype(np.uint8)
    outcome = np.full(pattern.shape, OUT_INCONCLUSIVE, dtype=np.int8)
    outcome[(pattern == D1 | D2) | (pattern == D3 | D4)] = OUT_PSI_PLUS
    outcome[(pattern == D1 | D3) | (pattern == D2 | D4)] = OUT_PSI_MINUS
    nsig = hit1.astype(np.uint8) + hit2.astype(np.uint8)
    return outcome, pattern, nsig


def simulate_rounds(key, start, stop, n_parties, nslots, k0,
                    ev_kind, ev_a, ev_b, ev_slot, ev_eta, ev_ex, ev_ey,
                    trans, forced, eta_d, eta_D, p_d, bsa_slot):
    """Run rounds ``start..stop-1``.

    Returns ``(keys, outcome, pattern, nsig)`` with ``keys[r, i]`` the key
    index 2a+b of party i.
    """
    rounds = np.arange(start, stop, dtype=np.uint64)
    n = rounds.size
    keys = np.zeros((n, n_parties), dtype=np.uint8)
    for i in range(n_parties):
        if not forced[i]:
            keys[:, i] = (raw_draws(key, rounds, nslots, i) >> np.uint64(62)).astype(np.uint8)
    label = np.full(n, k0, dtype=np.int64)
    alive = [np.ones(n, dtype=bool), np.ones(n, dtype=bool)]
    trans = np.asarray(trans, dtype=np.int64)
    for e in range(len(ev_kind)):
        kind = ev_kind[e]
        if kind == EV_ENCODE:
            label = trans[ev_b[e], label, keys[:, ev_a[e]]]
        elif kind == EV_SEGMENT:
            photon = ev_a[e]
            alive[photon] = alive[photon] & (uniforms(key, rounds, nslots, ev_slot[e]) < ev_eta[e])
            p_flip = np.where(label & 1, ev_ey[e], ev_ex[e])
            flip = alive[photon] & (uniforms(key, rounds, nslots, ev_slot[e] + 1) < p_flip)
            label = np.where(flip, label ^ 2, label)
        elif kind == EV_INTERCEPT:
            family = ev_a[e]
            resend = family | np.where(uniforms(key, rounds, nslots, ev_slot[e]) >= 0.5, 2, 0)
            label = np.where((label & 1) != family, resend, label)
        else:
            raise ValueError(f"unknown event kind {kind}")
    u = [uniforms(key, rounds, nslots, bsa_slot + j) for j in range(BSA_SLOTS)]
    outcome, pattern, nsig = resolve_clicks(alive[0], alive[1], label, u, eta_d, eta_D, p_d)
    return keys, outcome, pattern, nsig


def jacobi_eigvalsh(matrices: np.ndarray, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a batch of Hermitian matrices by cyclic complex Jacobi.

    ``matrices`` has shape (m, n, n). Returns (m, n) ascending eigenvalues.
    """
    a = np.array(matrices, dtype=np.complex128, copy=True)
    m, n, _ = a.shape
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(a[:, offmask]) ** 2, axis=1))
        if np.all(off < tol):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                r = np.abs(apq)
                active = r > 1e-300
                if not np.any(active):
                    continue
                safe_r = np.where(active, r, 1.0)
                phase = np.where(active, apq / safe_r, 1.0)
                # huge theta overflows to inf and gives t = 0, as in C
                with np.errstate(over="ignore"):
                    theta = (a[:, q, q].real - a[:, p, p].real) / (2.0 * safe_r)
                    sgn = np.where(theta >= 0.0, 1.0, -1.0)
                    t = sgn / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)[:, None]
                s = np.where(active, s, 0.0)[:, None]
                e = np.conj(phase)[:, None]
                col_p = a[:, :, p].copy()
                col_q = a[:, :, q]
                a[:, :, p] = c * col_p - s * e * col_q
                a[:, :, q] = s * col_p + c * e * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :]
                a[:, p, :] = c * row_p - s * np.conj(e) * row_q
                a[:, q, :] = s * row_p + c * np.conj(e) * row_q
                a[active, p, q] = 0.0
                a[active, q, p] = 0.0
    return np.sort(np.real(np.diagonal(a, axis1=1, axis2=2)), axis=1)
