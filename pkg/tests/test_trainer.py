import numpy as np
import pytest

from lpstomo import lps as L
from lpstomo.metrics import infidelity
from lpstomo.povm import MeasurementDataset, all_bases, basis_probabilities, sample_bases, sample_dataset
from lpstomo.states import ghz, random_mixed
from lpstomo.trainer import LossProblem, TrainConfig, TrainingDiverged, fit, loss_gradients, mse_loss


def normalized_dense(model):
    m = L.to_dense(model)
    return m / np.trace(m).real


def central_differences(problem, model, h=1e-5):
    out = []
    for s, t in enumerate(model.tensors):
        g = np.zeros(t.shape, dtype=complex)
        for idx in np.ndindex(t.shape):
            for unit in (1.0, 1j):
                vals = []
                for sign in (1, -1):
                    m = model.copy()
                    m.tensors[s] = m.tensors[s].copy()
                    m.tensors[s][idx] += sign * h * unit
                    vals.append(problem.loss(m))
                g[idx] += unit * (vals[0] - vals[1]) / (2 * h)
        out.append(g)
    return out


class TestLoss:
    def test_zero_at_exact_match(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=2, seed=1))
        data = sample_dataset(normalized_dense(model), all_bases(3), 0)
        assert mse_loss(model, data) <= 1e-28

    def test_single_qubit_hand_value(self):
        # model |0>, data says X+ always: residuals (0.5-1)^2 and 0.5^2 over 2 outcomes
        model = L.Lps([np.array([[1.0], [0.0]])], chi=1)
        data = MeasurementDataset(1, ["X"], np.array([[1.0, 0.0]]), 0)
        assert mse_loss(model, data) == pytest.approx(0.25, abs=1e-15)

    def test_against_dense_oracle(self):
        model = L.init_random(L.LpsHyperparams(3, chi=3, n_beta=1, seed=4))
        bases = sample_bases(3, 7, seed=2)
        data = sample_dataset(random_mixed(3, 0.5, seed=1), bases, 300, seed=3)
        rho = normalized_dense(model)
        p = np.array([basis_probabilities(rho, b) for b in bases])
        ref = np.mean((p - data.freqs) ** 2)
        assert mse_loss(model, data) == pytest.approx(ref, rel=1e-12)

    def test_scale_invariant(self):
        model = L.init_random(L.LpsHyperparams(2, chi=2, n_beta=1, seed=0))
        data = sample_dataset(ghz(2), all_bases(2), 100, seed=0)
        scaled = model.copy()
        scaled.tensors[0] = scaled.tensors[0] * 3.0
        assert mse_loss(scaled, data) == pytest.approx(mse_loss(model, data), rel=1e-12)


class TestGradients:
    @pytest.mark.parametrize("n,chi,nb", [(2, 2, 2), (2, 2, 0), (3, 2, 3), (3, 3, 1)])
    def test_central_differences(self, n, chi, nb):
        data = sample_dataset(random_mixed(n, 0.6, seed=n), sample_bases(n, 5, seed=1), 200, seed=2)
        model = L.init_random(L.LpsHyperparams(n, chi=chi, n_beta=nb, seed=3))
        problem = LossProblem(data)
        got = loss_gradients(model, data)
        ref = central_differences(problem, model)
        for g, r in zip(got, ref):
            for a, b in ((g.real, r.real), (g.imag, r.imag)):
                rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)
                assert rel.max() <= 1e-5

    def test_vanishes_at_exact_match(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=3, seed=6))
        data = sample_dataset(normalized_dense(model), all_bases(3), 0)
        assert max(np.abs(g).max() for g in loss_gradients(model, data)) <= 1e-12

    def test_no_component_along_global_scaling(self):
        model = L.init_random(L.LpsHyperparams(3, chi=2, n_beta=1, seed=2))
        data = sample_dataset(random_mixed(3, 0.7, seed=5), sample_bases(3, 6, seed=0), 500, seed=0)
        grads = loss_gradients(model, data)
        # d/ds L((1+s)A) = sum Re(conj(A) . G)
        directional = sum(np.real(np.vdot(t, g)) for t, g in zip(model.tensors, grads))
        scale = sum(np.linalg.norm(t) * np.linalg.norm(g) for t, g in zip(model.tensors, grads))
        assert abs(directional) <= 1e-10 * scale


class TestFit:
    def test_single_qubit_zero_state(self):
        data = sample_dataset(np.diag([1.0, 0.0]), all_bases(1), 0)
        model, report = fit(L.LpsHyperparams(1, chi=1, seed=0), data, TrainConfig(learning_rate=2e-2))
        assert report.best_loss <= 1e-6
        assert infidelity(normalized_dense(model), np.diag([1.0, 0.0])) <= 1e-3

    def test_ghz3_recovered(self):
        target = ghz(3)
        data = sample_dataset(target, all_bases(3), 0)
        model, report = fit(L.LpsHyperparams(3, chi=2, n_beta=0, seed=0), data)
        assert infidelity(normalized_dense(model), target) <= 0.02
        assert report.stop_reason in ("converged", "loss floor reached")

    def test_deterministic(self):
        data = sample_dataset(random_mixed(2, 0.7, seed=0), all_bases(2), 500, seed=1)
        h = L.LpsHyperparams(2, chi=2, n_beta=2, seed=3)
        cfg = TrainConfig(max_epochs=60)
        a, ra = fit(h, data, cfg)
        b, rb = fit(h, data, cfg)
        assert ra.losses == rb.losses
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.tensors, b.tensors))

    def test_gd_never_increases_loss(self):
        data = sample_dataset(random_mixed(2, 0.5, seed=2), all_bases(2), 1000, seed=0)
        _, report = fit(
            L.LpsHyperparams(2, chi=2, n_beta=1, seed=0), data, TrainConfig(optimizer="gd", learning_rate=1.0, max_epochs=80)
        )
        assert all(b <= a for a, b in zip(report.losses, report.losses[1:]))
        assert report.losses[-1] < report.losses[0]

    def test_minibatch_runs_and_reports_full_loss(self):
        data = sample_dataset(random_mixed(3, 0.6, seed=2), all_bases(3), 500, seed=0)
        model, report = fit(L.LpsHyperparams(3, chi=2, n_beta=1), data, TrainConfig(max_epochs=40, bases_per_step=5))
        assert report.best_loss == pytest.approx(mse_loss(model, data), rel=1e-12)

    def test_resume_continues_identically(self, tmp_path):
        data = sample_dataset(random_mixed(2, 0.6, seed=4), all_bases(2), 500, seed=2)
        h = L.LpsHyperparams(2, chi=2, n_beta=2, seed=1)
        cfg = TrainConfig(max_epochs=40, checkpoint_every=20, tol=0.0, patience=10**6)
        ckpt = tmp_path / "ckpt.json"
        full_model, full = fit(h, data, cfg, checkpoint_path=tmp_path / "unused.json")
        fit(h, data, TrainConfig(max_epochs=20, checkpoint_every=20, tol=0.0, patience=10**6), checkpoint_path=ckpt)
        resumed_model, resumed = fit(h, data, cfg, resume_from=ckpt)
        assert resumed.losses == full.losses
        assert all(x.tobytes() == y.tobytes() for x, y in zip(full_model.tensors, resumed_model.tensors))

    def test_nan_aborts_with_epoch(self):
        data = sample_dataset(np.eye(2) / 2, all_bases(1), 0)
        bad = L.Lps([np.array([[np.nan], [1.0]])], chi=1)
        with pytest.raises(TrainingDiverged, match="epoch 0"):
            fit(L.LpsHyperparams(1, chi=1), data, init=bad)

    def test_qubit_mismatch(self):
        data = sample_dataset(np.eye(2) / 2, all_bases(1), 0)
        with pytest.raises(ValueError):
            fit(L.LpsHyperparams(2), data)
