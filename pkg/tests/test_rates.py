import mpmath as mp
import numpy as np
import pytest
import scipy.linalg

from mdiqss.channel import end_to_end_error
from mdiqss.rates import (
    GramSpectrum,
    NoBracketError,
    SystemParams,
    binary_entropy,
    coincidence_rate,
    dark_count_errors,
    gram_holevo,
    gram_matrix,
    gram_spectrum,
    holevo_bound,
    key_rate,
    key_rate_with_dark_counts,
    max_distance,
    rate_curve,
    threshold_fidelity,
    total_error,
)

mp.mp.dps = 50


def mp_h(x):
    x = mp.mpf(x)
    if x in (0, 1):
        return mp.mpf(0)
    return -x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2)


def mp_terms(p: SystemParams, L):
    """Independent high-precision evaluation of Q, e_d1, e_d2, e, e_tot."""
    a, L = mp.mpf(p.alpha), mp.mpf(L)
    eta_t = mp.power(10, -a * L / 10)
    k = 2 if p.topology.value == "symmetric" else 1
    t = eta_t**k
    pd, ed, eD = mp.mpf(p.p_d), mp.mpf(p.eta_d), mp.mpf(p.eta_D)
    q = t * t * ed * ed * eD
    e_d1 = 4 * pd * pd * (1 - pd) ** 2
    e_d2 = 4 * t * eD * ed * pd * (1 - pd) ** 2 * (1 - t * ed)
    ex, ey = mp.mpf(p.e_x), mp.mpf(p.e_y)
    e = ex * (1 - ex) + ey * (1 - ex) / 2 + (1 - ey) * ex / 2
    e_tot = (e_d1 + e_d2 / 2 + e * q) / (e_d1 + e_d2 + q)
    return q, e_d1, e_d2, e, e_tot


def mp_rate(p: SystemParams, L):
    q, _, _, e, e_tot = mp_terms(p, L)
    return q * (1 - mp_h(e_tot) - mp_h(1 - mp.sqrt(1 - 2 * e)))


class TestEntropy:
    def test_values(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == 0.0 == binary_entropy(1.0)
        assert binary_entropy(0.11) == pytest.approx(float(mp_h("0.11")), abs=1e-15)
        assert 0.4999 < binary_entropy(0.11) < 0.5

    def test_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.01)

    def test_holevo(self):
        assert holevo_bound(0, 0, 1) == 0
        assert holevo_bound(0.25, 0.25, 1) == 1.0
        assert holevo_bound(0.05, 0.05, 0.3) == pytest.approx(0.3 * binary_entropy(0.1))
        with pytest.raises(ValueError):
            holevo_bound(0.3, 0.3)


class TestGram:
    @pytest.mark.parametrize("beta", [-0.9, -0.5, 0.0, 0.5, 0.9, 1.0, -1.0])
    def test_closed_form_spectrum(self, beta):
        spec = gram_spectrum(beta)
        np.testing.assert_allclose(spec.eigenvalues, GramSpectrum.closed_form(beta), atol=1e-10)
        assert abs(spec.eigenvalues.sum() - 1) < 1e-12

    def test_half_beta_example(self):
        np.testing.assert_allclose(gram_spectrum(0.5).eigenvalues, [0, 0, 0, 0, 0.125, 0.125, 0.375, 0.375],
                                   atol=1e-12)

    @pytest.mark.parametrize("alpha, beta", [(0.3, 0.2), (0.1, -0.4), (0.0, 0.7)])
    def test_matrix_is_hermitian_and_matches_lapack(self, alpha, beta):
        g = gram_matrix(beta, alpha)
        np.testing.assert_allclose(g, g.conj().T, atol=0)
        np.testing.assert_allclose(gram_spectrum(beta, alpha).eigenvalues, scipy.linalg.eigvalsh(g), atol=1e-12)

    def test_pure_limit(self):
        spec, bound = gram_holevo(0.0, 0.0)
        assert bound == pytest.approx(0.0, abs=1e-12) and spec.beta == 1.0
        np.testing.assert_allclose(spec.eigenvalues, [0] * 6 + [0.5, 0.5], atol=1e-12)

    def test_example_point(self):
        spec, bound = gram_holevo(0.05, 0.05)
        assert abs(bound - binary_entropy(0.1)) < 1e-9
        assert spec.beta == pytest.approx(0.8)

    def test_max_at_lower_endpoint(self):
        for ex, ey in [(0.01, 0.2), (0.1, 0.1), (0.2, 0.05)]:
            spec, _ = gram_holevo(ex, ey, n_beta=51)
            assert spec.beta == pytest.approx(1 - 2 * (ex + ey))

    def test_validity(self):
        with pytest.raises(ValueError):
            gram_holevo(0.3, 0.3)
        with pytest.raises(ValueError):
            gram_spectrum(1.5)


class TestParams:
    def test_fidelity_convention(self):
        p = SystemParams.from_fidelity(0.99)
        assert p.e_x == p.e_y == pytest.approx(0.01) and p.fidelity == pytest.approx(0.99)
        with pytest.raises(ValueError):
            SystemParams.from_fidelity(0.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            SystemParams(e_x=0.3, e_y=0.3)
        with pytest.raises(ValueError):
            SystemParams(q_eve=2)
        with pytest.raises(ValueError):
            SystemParams(alpha=-1)


class TestRates:
    def test_trivial_values(self):
        assert key_rate(SystemParams(eta_d=1, eta_D=1, p_d=0), 0) == 1.0
        assert key_rate(SystemParams(), 0) == pytest.approx(0.8649 * 0.863, rel=1e-12)

    def test_negative_distance(self):
        with pytest.raises(ValueError):
            key_rate(SystemParams(), -1)

    def test_unbiased_reduction(self):
        for q in np.linspace(1e-4, 0.25, 40):
            e = end_to_end_error(q, q)
            assert e == pytest.approx(2 * q * (1 - q), abs=1e-12)
            assert binary_entropy(q + q) == pytest.approx(binary_entropy(1 - np.sqrt(1 - 2 * e)), abs=1e-12)

    def test_threshold(self):
        assert threshold_fidelity() == pytest.approx(0.943, abs=1e-3)
        # R at L=0 crosses zero at e_x ~ 0.057, end-to-end e ~ 0.107
        e_x = 1 - threshold_fidelity()
        assert end_to_end_error(e_x, e_x) == pytest.approx(0.107, abs=1e-3)

    def test_dark_count_terms_vs_mpmath(self):
        p = SystemParams.from_fidelity(0.99)
        q, e_d1, e_d2, e, e_tot = mp_terms(p, 150)
        d1, d2 = dark_count_errors(p, 150)
        assert d1 == pytest.approx(float(e_d1), rel=1e-14)
        assert d1 == pytest.approx(4e-14 * (1 - 1e-7) ** 2, rel=1e-14)
        assert d2 == pytest.approx(float(e_d2), rel=1e-12)
        assert coincidence_rate(p, 150) == pytest.approx(float(q), rel=1e-12)
        assert total_error(p, 150) == pytest.approx(float(e_tot), rel=1e-10)
        assert total_error(p, 150) == pytest.approx(0.115, abs=0.005)

    def test_proximal_dark_count_identity(self):
        for L in np.linspace(0, 400, 81):
            sym = dark_count_errors(SystemParams(topology="symmetric"), L / 2)[1]
            prox = dark_count_errors(SystemParams(topology="proximal"), L)[1]
            assert abs(prox - sym) <= 1e-15 * max(abs(sym), 1e-300)

    def test_no_dark_counts(self):
        assert dark_count_errors(SystemParams(p_d=0), 100) == (0.0, 0.0)
        p = SystemParams.from_fidelity(0.98, p_d=0)
        for L in (0, 50, 120, 300, 5000):
            assert total_error(p, L) == p.channel_error
            assert key_rate_with_dark_counts(p, L) == key_rate(p, L)

    def test_q_to_zero_limit(self):
        p = SystemParams(p_d=1e-3)
        q, e_d1, e_d2, *_ = mp_terms(p, 800)
        assert total_error(p, 800) == pytest.approx(float((e_d1 + e_d2 / 2) / (e_d1 + e_d2)), rel=1e-9)

    @pytest.mark.parametrize("fid, top, L", [(0.99, "symmetric", 120), (0.97, "proximal", 250),
                                             (0.99, "symmetric", 163), (0.995, "proximal", 10)])
    def test_rate_vs_mpmath(self, fid, top, L):
        p = SystemParams.from_fidelity(fid, topology=top)
        want = mp_rate(p, L)
        assert key_rate_with_dark_counts(p, L) == pytest.approx(float(want), rel=1e-8, abs=1e-300)

    def test_rate_sign_brackets(self):
        p = SystemParams.from_fidelity(0.99)
        assert key_rate_with_dark_counts(p, 160) > 0 > key_rate_with_dark_counts(p, 166)
        dist = max_distance(SystemParams.from_fidelity(0.97, topology="proximal"))
        assert 296 <= dist <= 316

    @pytest.mark.parametrize("fid, top, want, tol", [(0.99, "symmetric", 163, 5), (0.97, "symmetric", 153, 5),
                                                     (0.99, "proximal", 326, 8), (0.97, "proximal", 306, 8)])
    def test_max_distance(self, fid, top, want, tol):
        p = SystemParams.from_fidelity(fid, topology=top)
        dist = max_distance(p)
        assert abs(dist - want) <= tol
        # resolution: the rate changes sign within 0.1 km of the answer
        assert key_rate_with_dark_counts(p, dist - 0.1) > 0 > key_rate_with_dark_counts(p, dist + 0.1)
        # and it is the first crossing
        grid = np.arange(0, dist - 0.1, 0.5)
        assert all(key_rate_with_dark_counts(p, L) >= 0 for L in grid)

    def test_no_bracket(self):
        with pytest.raises(NoBracketError):
            max_distance(SystemParams(p_d=0))
        with pytest.raises(NoBracketError):
            max_distance(SystemParams.from_fidelity(0.9))  # R(0) < 0

    def test_q_eve_override(self):
        p = SystemParams.from_fidelity(0.99)
        base = key_rate(p, 50)
        higher = key_rate(p.with_(q_eve=1e-3), 50)
        assert higher < base


class TestCurve:
    def test_shape_and_clamp(self):
        p = SystemParams.from_fidelity(0.99)
        c = rate_curve(p, np.arange(0, 200, 1.0))
        assert np.all(np.isfinite(c.rate_raw))
        assert (c.rate_raw < 0).any() and (c.rate_clamped >= 0).all()
        assert c.points[0] == (0.0, c.rate_raw[0])

    def test_monotone_while_positive(self):
        c = rate_curve(SystemParams.from_fidelity(0.97), np.arange(0, 150, 0.5))
        r = c.rate_raw
        assert (r > 0).all() and (np.diff(r) < 0).all()

    def test_ideal_equals_eta0(self):
        p = SystemParams(p_d=0)
        grid = np.arange(0, 300, 10.0)
        c = rate_curve(p, grid)
        assert np.array_equal(c.rate_raw, c.q)

    def test_higher_fidelity_dominates(self):
        grid = np.arange(0, 400, 2.0)
        for top in ("symmetric", "proximal"):
            hi = rate_curve(SystemParams.from_fidelity(0.99, topology=top), grid).rate_clamped
            lo = rate_curve(SystemParams.from_fidelity(0.97, topology=top), grid).rate_clamped
            assert (hi >= lo).all()

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            rate_curve(SystemParams(), [])
