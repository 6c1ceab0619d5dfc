import itertools

import numpy as np
import pytest

from lpstomo import lps as L
from lpstomo.povm import CollapseOutcome, all_bases, basis_probabilities


def dense_normalized(model):
    m = L.to_dense(model)
    return m / np.trace(m).real


def random_outcomes(rng, n, count):
    out = []
    for _ in range(count):
        basis = "".join(rng.choice(list("XYZ"), n))
        signs = "".join(rng.choice(list("01"), n))
        out.append(CollapseOutcome(basis, signs))
    return out


def quadratic_form(rho, outcome):
    from lpstomo.povm import outcome_state

    v = np.array([1.0 + 0j])
    for ket in outcome_state(outcome):
        v = np.kron(v, ket)
    return float(np.real(v.conj() @ rho @ v))


class TestInit:
    def test_single_site_pure(self):
        model = L.init_random(L.LpsHyperparams(1, chi=1, n_beta=0, seed=3))
        assert model.tensors[0].shape == (2, 1)
        rho = L.to_dense(model)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        lam = np.linalg.eigvalsh(rho)
        assert lam[0] == pytest.approx(0.0, abs=1e-12)
        assert lam[1] == pytest.approx(1.0, abs=1e-12)

    def test_mixed_psd_unit_trace(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=3, seed=0))
        rho = L.to_dense(model)
        assert np.linalg.eigvalsh(rho).min() >= -1e-12
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        h = L.LpsHyperparams(4, chi=3, n_beta=2, seed=42)
        a, b = L.init_random(h), L.init_random(h)
        for x, y in zip(a.tensors, b.tensors):
            assert x.tobytes() == y.tobytes()

    def test_axis_layout(self):
        model = L.init_random(L.LpsHyperparams(4, chi=3, n_beta=2, seed=0))
        shapes = [t.shape for t in model.tensors]
        assert shapes == [(2, 3, 2), (2, 3, 3, 2), (2, 3, 2, 1), (2, 2, 1)]
        assert model.n_beta == 2
        assert model.beta_dims == (2, 2, 1, 1)

    def test_bond_cap(self):
        # first bond cannot usefully exceed the local dimension 2 * dim(beta)
        assert L.bond_dims(4, 8, (1, 1, 1, 1)) == [2, 4, 2]
        assert L.bond_dims(4, 8, (2, 2, 2, 2)) == [4, 8, 4]

    def test_invalid_hyperparams(self):
        with pytest.raises(ValueError):
            L.LpsHyperparams(3, n_beta=4)
        with pytest.raises(ValueError):
            L.LpsHyperparams(3, chi=0)

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_param_count_linear_in_n(self, n):
        counts = [L.init_random(L.LpsHyperparams(k, chi=2, n_beta=0)).num_params for k in (n, n + 1, n + 2)]
        assert counts[2] - counts[1] == counts[1] - counts[0]
        model = L.init_random(L.LpsHyperparams(n, chi=2, n_beta=0))
        assert model.num_params == sum(int(np.prod(t.shape)) for t in model.tensors)


class TestProb:
    def test_single_qubit_zero_state(self):
        model = L.Lps([np.array([[1.0], [0.0]])], chi=1)
        assert L.prob(model, CollapseOutcome("Z", "0")) == pytest.approx(1.0)
        assert L.prob(model, CollapseOutcome("X", "0")) == pytest.approx(0.5)

    def test_maximally_mixed_two_qubits(self):
        eye = np.zeros((2, 1, 2))
        eye[0, 0, 0] = eye[1, 0, 1] = 1.0
        last = np.zeros((2, 1, 2))
        last[0, 0, 0] = last[1, 0, 1] = 1.0
        model = L.Lps([eye, last], chi=1)
        np.testing.assert_allclose(dense_normalized(model), np.eye(4) / 4, atol=1e-15)
        for basis in all_bases(2):
            for signs in ("00", "01", "10", "11"):
                assert L.prob(model, CollapseOutcome(basis, signs)) == pytest.approx(0.25, abs=1e-15)

    def test_matches_dense_quadratic_form(self):
        rng = np.random.default_rng(7)
        model = L.init_random(L.LpsHyperparams(4, chi=3, n_beta=4, seed=1))
        rho = dense_normalized(model)
        outcomes = random_outcomes(rng, 4, 50)
        batch = L.probabilities(model, outcomes)
        for o, p in zip(outcomes, batch):
            ref = quadratic_form(rho, o)
            assert abs(L.prob(model, o) - ref) <= 1e-10
            assert abs(p - ref) <= 1e-10

    def test_wrong_length(self):
        model = L.init_random(L.LpsHyperparams(3))
        with pytest.raises(ValueError):
            L.prob(model, CollapseOutcome("XY", "00"))

    @pytest.mark.parametrize("n,nb", [(1, 0), (2, 1), (3, 3), (4, 2)])
    def test_normalized_per_basis(self, n, nb):
        model = L.init_random(L.LpsHyperparams(n, chi=3, n_beta=nb, seed=n))
        for basis in all_bases(n):
            outs = [CollapseOutcome(basis, "".join(s)) for s in itertools.product("01", repeat=n)]
            p = L.probabilities(model, outs)
            assert abs(p.sum() - 1.0) <= 1e-8
            assert p.min() >= -1e-12

    def test_mps_reduction(self):
        # with trivial purification bonds the model is the pure state |psi><psi|
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=0, seed=5))
        psi = np.ones(1, dtype=complex)
        for n in range(3):
            a = model.site4(n)[..., 0]  # (phys, left, right)
            psi = np.einsum("pa,gab->pgb", psi.reshape(-1, a.shape[1]), a).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        for o in random_outcomes(np.random.default_rng(1), 3, 20):
            v = np.array([1.0 + 0j])
            from lpstomo.povm import outcome_state

            for ket in outcome_state(o):
                v = np.kron(v, ket)
            assert L.prob(model, o) == pytest.approx(abs(v.conj() @ psi) ** 2, abs=1e-12)


class TestTrace:
    def test_fresh_model(self):
        assert L.trace(L.init_random(L.LpsHyperparams(5, chi=3, n_beta=2, seed=9))) == pytest.approx(1.0, abs=1e-12)

    def test_quadratic_scaling(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=1, seed=2))
        before = L.trace(model)
        model.tensors[1] = model.tensors[1] * 2
        assert L.trace(model) == pytest.approx(4 * before, rel=1e-12)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_matches_dense(self, n):
        model = L.init_random(L.LpsHyperparams(n, chi=3, n_beta=n // 2, seed=n, init_scale=0.9))
        model.tensors[0] = model.tensors[0] * 1.7
        assert abs(L.trace(model) - np.trace(L.to_dense(model)).real) <= 1e-10


class TestDense:
    def test_single_site(self):
        model = L.Lps([np.array([[1.0], [0.0]])], chi=1)
        np.testing.assert_array_equal(L.to_dense(model), np.diag([1.0, 0.0]))

    def test_pure_model_rank_one(self):
        rho = dense_normalized(L.init_random(L.LpsHyperparams(4, chi=3, n_beta=0, seed=4)))
        lam = np.sort(np.linalg.eigvalsh(rho))
        assert lam[-2] <= 1e-10

    def test_diagonal_round_trip(self):
        model = L.init_random(L.LpsHyperparams(4, chi=3, n_beta=3, seed=8))
        rho = dense_normalized(model)
        outs = [CollapseOutcome("ZZZZ", "".join(s)) for s in itertools.product("01", repeat=4)]
        np.testing.assert_allclose(L.probabilities(model, outs), np.real(np.diag(rho)), atol=1e-12)

    def test_cap(self):
        model = L.init_random(L.LpsHyperparams(4))
        with pytest.raises(L.ResourceError):
            L.to_dense(model, max_qubits=3)

    def test_arbitrary_product_kets(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=2, seed=6))
        rho = dense_normalized(model)
        rng = np.random.default_rng(3)
        kets = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
        kets /= np.linalg.norm(kets, axis=1, keepdims=True)
        choices = rng.integers(0, 5, size=(10, 3))
        got = L.product_probabilities(model, choices, kets)
        for row, p in zip(choices, got):
            v = np.kron(np.kron(kets[row[0]], kets[row[1]]), kets[row[2]])
            assert p == pytest.approx(np.real(v.conj() @ rho @ v), abs=1e-12)


class TestCheckpoint:
    def test_round_trip_reproduces_probabilities(self, tmp_path):
        model = L.init_random(L.LpsHyperparams(4, chi=3, n_beta=2, seed=11))
        path = L.save_lps(model, tmp_path / "model.json")
        back = L.load_lps(path)
        assert back.beta_dims == model.beta_dims and back.chi == model.chi
        outs = random_outcomes(np.random.default_rng(0), 4, 30)
        a = L.probabilities(model, outs)
        b = L.probabilities(back, outs)
        assert a.tobytes() == b.tobytes()

    def test_bad_bonds_rejected(self):
        with pytest.raises(Exception):
            L.Lps([np.ones((2, 2, 1)), np.ones((2, 3, 1))], chi=3)


def test_dense_probabilities_consistent_with_basis_probabilities():
    model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=3, seed=12))
    rho = dense_normalized(model)
    for basis in ["XYZ", "ZZX", "YYY"]:
        outs = [CollapseOutcome(basis, "".join(s)) for s in itertools.product("01", repeat=3)]
        np.testing.assert_allclose(L.probabilities(model, outs), basis_probabilities(rho, basis), atol=1e-12)
