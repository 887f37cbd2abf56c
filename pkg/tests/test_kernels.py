import numpy as np
import pytest
import scipy.linalg

from mdiqss import _backend, _pykernels as pk
from mdiqss.bsa import BsaOutcome, DetectorParams, _resolve, outcome_from_pattern
from mdiqss.linalg import eigvalsh_jacobi
from mdiqss.protocol import build_links, simulate

BOTH = len(_backend.available()) == 2
needs_both = pytest.mark.skipif(not BOTH, reason="compiled extension not built")


def _fields(batch):
    return [batch.keys, batch.outcome, batch.pattern, batch.nsig]


class TestRng:
    def test_seed_key_reference(self):
        # SplitMix64 first output for state 0 (published reference value)
        assert pk.seed_key(0) == 0xE220A8397B1DCDAF

    def test_uniform_moments(self):
        u = pk.uniforms(pk.seed_key(7), np.arange(200_000, dtype=np.uint64), 5, 2)
        assert ((u >= 0) & (u < 1)).all()
        assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
        counts = np.bincount((u * 10).astype(int), minlength=10)
        chi2 = ((counts - u.size / 10) ** 2 / (u.size / 10)).sum()
        assert chi2 < 30  # 9 dof, p ~ 4e-4

    def test_slots_independent(self):
        r = np.arange(100_000, dtype=np.uint64)
        a = pk.uniforms(1, r, 4, 0)
        b = pk.uniforms(1, r, 4, 1)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


class TestSimulateParity:
    @needs_both
    @pytest.mark.parametrize("adv", ["none", "intercept-x", "intercept-y"])
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_bitwise(self, n, adv):
        links = build_links(n, length_km=20, e_x=0.03, e_y=0.02)
        det = DetectorParams(eta_d=0.9, p_d=1e-2, eta_D=0.8)
        py = simulate(20_000, n, links, det, adv, seed=11, backend="python")
        c = simulate(20_000, n, links, det, adv, seed=11, backend="compiled")
        for x, y in zip(_fields(py), _fields(c)):
            assert np.array_equal(x, y)

    def test_chunking_and_offset(self, backend):
        links = build_links(3, length_km=10, e_x=0.02, e_y=0.02)
        whole = simulate(5000, 3, links, seed=3, backend=backend)
        pieces = simulate(5000, 3, links, seed=3, backend=backend, chunk_size=777, workers=3)
        tail = simulate(2000, 3, links, seed=3, backend=backend, start=3000)
        for x, y, z in zip(_fields(whole), _fields(pieces), _fields(tail)):
            assert np.array_equal(x, y)
            assert np.array_equal(x[3000:], z)

    def test_seed_changes_output(self, backend):
        a = simulate(1000, seed=1, backend=backend)
        b = simulate(1000, seed=2, backend=backend)
        assert not np.array_equal(a.keys, b.keys)


class TestResolveClicks:
    def test_matches_scalar_resolver(self):
        rng = np.random.default_rng(5)
        n = 4000
        det = DetectorParams(eta_d=0.7, p_d=0.05, eta_D=0.8)
        u = [rng.random(n) for _ in range(pk.BSA_SLOTS)]
        alive1, alive2 = rng.random(n) < 0.7, rng.random(n) < 0.7
        label = rng.integers(0, 4, n)
        out, pat, nsig = pk.resolve_clicks(alive1, alive2, label, u, det.eta_d, det.eta_D, det.p_d)
        for r in range(n):
            plus = (u[1][r] < 0.5) if label[r] & 1 else label[r] == 0
            projected = BsaOutcome.PSI_PLUS if plus else BsaOutcome.PSI_MINUS
            scalar = np.array([u[0][r]] + [u[j][r] for j in range(2, 9)])
            mask, k = _resolve(bool(alive1[r]), bool(alive2[r]), projected, det, scalar)
            assert (mask, k) == (pat[r], nsig[r])
            assert outcome_from_pattern(mask) == out[r]

    def test_ideal_signatures(self):
        n = 1000
        rng = np.random.default_rng(0)
        u = [rng.random(n) for _ in range(pk.BSA_SLOTS)]
        ones = np.ones(n, dtype=bool)
        for label, want in [(0, pk.OUT_PSI_PLUS), (2, pk.OUT_PSI_MINUS)]:
            out, pat, nsig = pk.resolve_clicks(ones, ones, np.full(n, label), u, 1.0, 1.0, 0.0)
            assert (out == want).all() and (nsig == 2).all()
        out, *_ = pk.resolve_clicks(ones, ones, np.full(n, 1), u, 1.0, 1.0, 0.0)
        assert set(np.unique(out)) == {pk.OUT_PSI_PLUS, pk.OUT_PSI_MINUS}


def _random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


class TestJacobi:
    @pytest.mark.parametrize("n", [1, 2, 3, 8, 12])
    def test_vs_lapack(self, backend, n):
        rng = np.random.default_rng(n)
        batch = np.stack([_random_hermitian(rng, n) for _ in range(10)])
        got = eigvalsh_jacobi(batch, backend=backend)
        want = np.stack([scipy.linalg.eigvalsh(m) for m in batch])
        np.testing.assert_allclose(got, want, atol=1e-11)

    def test_real_symmetric_and_single(self, backend):
        m = np.array([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(eigvalsh_jacobi(m, backend=backend), [1.0, 3.0], atol=1e-14)

    def test_degenerate_and_diagonal(self, backend):
        np.testing.assert_array_equal(eigvalsh_jacobi(np.diag([3.0, -1.0, 3.0]), backend=backend), [-1, 3, 3])
        np.testing.assert_allclose(eigvalsh_jacobi(np.zeros((4, 4)), backend=backend), 0)

    def test_huge_spread(self, backend):
        m = np.array([[1e300, 1e-10], [1e-10, 0.0]])
        np.testing.assert_allclose(eigvalsh_jacobi(m, backend=backend), [0.0, 1e300], rtol=1e-15, atol=1e-25)

    @needs_both
    def test_backends_agree(self):
        rng = np.random.default_rng(9)
        batch = np.stack([_random_hermitian(rng, 8) for _ in range(50)])
        a = eigvalsh_jacobi(batch, backend="python")
        b = eigvalsh_jacobi(batch, backend="compiled")
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError, match="Hermitian"):
            eigvalsh_jacobi(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="square"):
            eigvalsh_jacobi(np.zeros((2, 3)))


class TestBackendSelection:
    def test_available(self):
        assert "python" in _backend.available()
        assert _backend.BACKEND in _backend.available()

    def test_unknown(self):
        with pytest.raises(RuntimeError):
            _backend.get("fortran")
