# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; bit-identical twins of ``_pykernels``."""

import numpy as np

from libc.math cimport sqrt, fabs
from libc.stdint cimport uint64_t, uint8_t, int8_t, int32_t, int64_t

cdef extern from "complex.h" nogil:
    double cabs(double complex)
    double complex conj(double complex)
    double creal(double complex)

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double TWO_NEG53 = 1.0 / 9007199254740992.0

cdef enum:
    EV_ENCODE = 0
    EV_SEGMENT = 1
    EV_INTERCEPT = 2


cdef inline uint64_t draw(uint64_t key, uint64_t rnd, uint64_t nslots, uint64_t slot) noexcept nogil:
    cdef uint64_t z = key + (rnd * nslots + slot + 1) * GOLDEN
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double uniform(uint64_t key, uint64_t rnd, uint64_t nslots, uint64_t slot) noexcept nogil:
    return <double>(draw(key, rnd, nslots, slot) >> 11) * TWO_NEG53


def simulate_rounds(uint64_t key, int64_t start, int64_t stop, int n_parties, int nslots, int k0,
                    ev_kind, ev_a, ev_b, ev_slot, ev_eta, ev_ex, ev_ey,
                    trans, forced, double eta_d, double eta_D, double p_d, int bsa_slot):
    cdef int64_t n = stop - start
    keys_arr = np.zeros((n, n_parties), dtype=np.uint8)
    outcome_arr = np.empty(n, dtype=np.int8)
    pattern_arr = np.empty(n, dtype=np.uint8)
    nsig_arr = np.empty(n, dtype=np.uint8)

    cdef uint8_t[:, ::1] keys = keys_arr
    cdef int8_t[::1] outcome = outcome_arr
    cdef uint8_t[::1] pattern = pattern_arr
    cdef uint8_t[::1] nsig = nsig_arr
    cdef const int32_t[::1] kind = np.ascontiguousarray(ev_kind, dtype=np.int32)
    cdef const int32_t[::1] ea = np.ascontiguousarray(ev_a, dtype=np.int32)
    cdef const int32_t[::1] eb = np.ascontiguousarray(ev_b, dtype=np.int32)
    cdef const int32_t[::1] eslot = np.ascontiguousarray(ev_slot, dtype=np.int32)
    cdef const double[::1] eeta = np.ascontiguousarray(ev_eta, dtype=np.float64)
    cdef const double[::1] eex = np.ascontiguousarray(ev_ex, dtype=np.float64)
    cdef const double[::1] eey = np.ascontiguousarray(ev_ey, dtype=np.float64)
    cdef const int8_t[:, :, ::1] tr = np.ascontiguousarray(trans, dtype=np.int8)
    cdef const uint8_t[::1] frc = np.ascontiguousarray(forced, dtype=np.uint8)

    cdef int n_events = kind.shape[0]
    cdef int64_t r, i
    cdef int e, label, photon, family, det1, det2, d, pat
    cdef uint64_t rnd, ns = <uint64_t>nslots
    cdef bint alive0, alive1, gate, plus, first, hit1, hit2, swap
    cdef double p_flip

    with nogil:
        for i in range(n):
            r = start + i
            rnd = <uint64_t>r
            for e in range(n_parties):
                if not frc[e]:
                    keys[i, e] = <uint8_t>(draw(key, rnd, ns, e) >> 62)
            label = k0
            alive0 = True
            alive1 = True
            for e in range(n_events):
                if kind[e] == EV_ENCODE:
                    label = tr[eb[e], label, keys[i, ea[e]]]
                elif kind[e] == EV_SEGMENT:
                    photon = ea[e]
                    if photon == 0:
                        alive0 = alive0 and uniform(key, rnd, ns, eslot[e]) < eeta[e]
                    else:
                        alive1 = alive1 and uniform(key, rnd, ns, eslot[e]) < eeta[e]
                    p_flip = eey[e] if (label & 1) else eex[e]
                    if (alive0 if photon == 0 else alive1) and uniform(key, rnd, ns, eslot[e] + 1) < p_flip:
                        label = label ^ 2
                elif kind[e] == EV_INTERCEPT:
                    family = ea[e]
                    if (label & 1) != family:
                        label = family | (2 if uniform(key, rnd, ns, eslot[e]) >= 0.5 else 0)

            # click-level analyzer, slot order as in _pykernels.resolve_clicks
            gate = uniform(key, rnd, ns, bsa_slot) < eta_D
            if label & 1:
                plus = uniform(key, rnd, ns, bsa_slot + 1) < 0.5
            else:
                plus = label == 0
            first = uniform(key, rnd, ns, bsa_slot + 2) < 0.5
            det1 = 1 if first else 8
            swap = alive0 and alive1 and not plus
            det2 = 2 if (first != swap) else 4
            hit1 = alive0 and gate and uniform(key, rnd, ns, bsa_slot + 3) < eta_d
            hit2 = alive1 and gate and uniform(key, rnd, ns, bsa_slot + 4) < eta_d
            pat = 0
            if hit1:
                pat = pat | det1
            if hit2:
                pat = pat | det2
            for d in range(4):
                if uniform(key, rnd, ns, bsa_slot + 5 + d) < p_d:
                    pat = pat | (1 << d)
            pattern[i] = <uint8_t>pat
            nsig[i] = <uint8_t>(hit1 + hit2)
            if pat == 3 or pat == 12:
                outcome[i] = 0
            elif pat == 5 or pat == 10:
                outcome[i] = 1
            else:
                outcome[i] = 2
    return keys_arr, outcome_arr, pattern_arr, nsig_arr


cdef void _jacobi_one(double complex[:, ::1] a, double tol, int max_sweeps) noexcept nogil:
    cdef int n = a.shape[0]
    cdef int sweep, p, q, k
    cdef double off, r, theta, t, c, s
    cdef double complex apq, e, ep, cp, cq
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += creal(a[p, q] * conj(a[p, q]))
        if sqrt(off) < tol:
            return
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = cabs(apq)
                if r <= 1e-300:
                    continue
                theta = (creal(a[q, q]) - creal(a[p, p])) / (2.0 * r)
                t = (1.0 if theta >= 0.0 else -1.0) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                e = conj(apq / r)
                for k in range(n):
                    cp = a[k, p]
                    cq = a[k, q]
                    a[k, p] = c * cp - s * e * cq
                    a[k, q] = s * cp + c * e * cq
                ep = conj(e)
                for k in range(n):
                    cp = a[p, k]
                    cq = a[q, k]
                    a[p, k] = c * cp - s * ep * cq
                    a[q, k] = s * cp + c * ep * cq
                a[p, q] = 0.0
                a[q, p] = 0.0


def jacobi_eigvalsh(matrices, double tol=1e-13, int max_sweeps=60):
    """Eigenvalues of a batch of Hermitian matrices by cyclic complex Jacobi."""
    work = np.array(matrices, dtype=np.complex128, copy=True, order="C")
    cdef double complex[:, :, ::1] a = work
    cdef Py_ssize_t m = a.shape[0], j
    with nogil:
        for j in range(m):
            _jacobi_one(a[j], tol, max_sweeps)
    return np.sort(np.real(np.diagonal(work, axis1=1, axis2=2)), axis=1)
