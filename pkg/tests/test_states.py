import numpy as np
import pytest
from scipy.stats import unitary_group

from lpstomo import states as S
from lpstomo.metrics import infidelity


class TestRandomMixed:
    def test_pure_request(self):
        rho = S.random_mixed(3, 1.0, seed=0)
        assert S.purity(rho) == pytest.approx(1.0, abs=1e-12)
        assert S.von_neumann_entropy(rho) <= 1e-10

    def test_maximally_mixed_limit(self):
        rho = S.random_mixed(2, 0.25, seed=0)
        lam = np.linalg.eigvalsh(rho)
        entropy = -np.sum(lam * np.log(lam))
        assert entropy == pytest.approx(2 * np.log(2), rel=0.02)
        assert S.von_neumann_entropy(rho) == pytest.approx(entropy, rel=1e-12)

    def test_requested_purity_reached(self):
        rng = np.random.default_rng(0)
        for seed in range(100):
            target = rng.uniform(1 / 16, 1)
            rho = S.random_mixed(4, target, seed=seed)
            assert abs(S.purity(rho) - target) <= 1e-6

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_outputs_are_states(self, n):
        rng = np.random.default_rng(n)
        for seed in range(100):
            S.check_density_matrix(S.random_mixed(n, rng.uniform(2.0**-n, 1), seed=seed))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            S.random_mixed(2, 0.2)

    def test_entropy_monotone_in_purity(self):
        purities = [0.95, 0.8, 0.6, 0.4, 0.2]
        entropies = [S.von_neumann_entropy(S.random_mixed(4, p, seed=5)) for p in purities]
        assert all(a < b for a, b in zip(entropies, entropies[1:]))


class TestGhz:
    def test_pure(self):
        rho = S.ghz(2)
        assert S.purity(rho) == pytest.approx(1.0, abs=1e-12)
        assert S.von_neumann_entropy(rho) == pytest.approx(0.0, abs=1e-10)

    def test_diagonal_in_local_basis(self):
        n = 3
        gammas = np.array([0.3, -1.1, 2.0])
        rho = S.ghz(n, beta=0.7, gammas=gammas)
        kets = S.ghz_local_kets(n, gammas)
        for idx in np.ndindex(*(2,) * n):
            v = np.array([1.0 + 0j])
            for q, s in enumerate(idx):
                v = np.kron(v, kets[q, s])
            p = np.real(v.conj() @ rho @ v)
            corner = len(set(idx)) == 1
            assert p == pytest.approx(0.5 if corner else 0.0, abs=1e-14)

    def test_against_explicit_vector(self):
        n, beta = 3, np.pi / 2
        gammas = np.random.default_rng(3).uniform(0, 2 * np.pi, n)
        ph = (1j**n) * np.exp(1j * gammas)
        plus = np.zeros(8, dtype=complex)
        minus = np.zeros(8, dtype=complex)
        for k in range(8):
            bits = [(k >> (n - 1 - q)) & 1 for q in range(n)]
            plus[k] = np.prod([ph[q] if b else 1.0 for q, b in enumerate(bits)]) / np.sqrt(8)
            minus[k] = np.prod([-ph[q] if b else 1.0 for q, b in enumerate(bits)]) / np.sqrt(8)
        psi = (plus + np.exp(1j * beta) * minus) / np.sqrt(2)
        ref = np.outer(psi, psi.conj())
        assert 1 - infidelity(S.ghz(n, beta, gammas), ref) == pytest.approx(1.0, abs=1e-12)

    def test_gamma_length(self):
        with pytest.raises(ValueError):
            S.ghz(3, gammas=[0.0, 0.0])


class TestDepolarize:
    def test_zero_noise(self):
        rho = S.random_mixed(2, 0.7, seed=1)
        assert S.depolarize(rho, 0.0).tobytes() == rho.astype(complex).tobytes()

    def test_full_noise(self):
        out = S.depolarize(S.ghz(3), 1.0)
        assert S.purity(out) == pytest.approx(1 / 8, abs=1e-15)

    def test_closed_form(self):
        out = S.depolarize(S.ghz(2), 0.1)
        assert S.purity(out) == pytest.approx(0.8575, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            S.depolarize(np.eye(2) / 2, 1.5)

    @pytest.mark.parametrize("eps", [0.0, 0.05, 0.3, 0.77, 1.0])
    def test_preserves_state_properties(self, eps):
        rho = S.random_mixed(3, 0.5, seed=int(eps * 100))
        S.check_density_matrix(S.depolarize(rho, eps))


class TestPurityEntropy:
    def test_maximally_mixed(self):
        for n in (1, 3, 5):
            rho = np.eye(2**n) / 2**n
            assert S.purity(rho) == pytest.approx(2.0**-n, abs=1e-15)
            assert S.von_neumann_entropy(rho) == pytest.approx(n * np.log(2), abs=1e-12)

    def test_unitary_invariance(self):
        rho = S.random_mixed(3, 0.4, seed=7)
        u = unitary_group.rvs(8, random_state=7)
        rot = u @ rho @ u.conj().T
        assert abs(S.purity(rot) - S.purity(rho)) < 1e-10
        assert abs(S.von_neumann_entropy(rot) - S.von_neumann_entropy(rho)) < 1e-10


def test_density_matrix_file_round_trip(tmp_path):
    rho = S.random_mixed(3, 0.5, seed=2)
    path = S.save_density_matrix(rho, tmp_path / "rho.json")
    back = S.load_density_matrix(path)
    assert back.tobytes() == rho.tobytes()
