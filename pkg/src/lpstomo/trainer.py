"""Mean-squared-error tomography loss and the gradient-descent training loop.

The model probability of a record is ``<v|rho|v> / Tr(rho)``, so the loss is
invariant under rescaling the tensors and no trace constraint is needed.
The loss averages over every outcome of every measured basis; outcomes never
observed enter with target frequency 0.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .lps import Lps, LpsHyperparams, OutcomePlan, init_random, lps_from_record, lps_to_record, record_probabilities
from .povm import MeasurementDataset

__all__ = [
    "TrainingDiverged",
    "TrainConfig",
    "TrainReport",
    "LossProblem",
    "mse_loss",
    "loss_gradients",
    "fit",
]

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when the loss becomes NaN or infinite."""


@dataclass
class TrainConfig:
    learning_rate: float = 5e-3
    max_epochs: int = 20000
    optimizer: str = "adam"  # "adam" or "gd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    tol: float = 1e-7
    patience: int = 50
    loss_floor: float = 0.0
    seed: int = 0
    bases_per_step: int | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    best_loss: float = float("inf")
    epochs: int = 0
    wall_time: float = 0.0
    stop_reason: str = ""
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class LossProblem:
    """A dataset compiled for repeated loss/gradient evaluation."""

    def __init__(self, data: MeasurementDataset):
        self.data = data
        self.n_qubits = data.n_qubits
        self.plan = OutcomePlan(data.outcome_choices())
        self.targets = data.freqs.reshape(-1)

    def graph(self, lps: Lps):
        if lps.n_qubits != self.n_qubits:
            raise ValueError(f"model has {lps.n_qubits} qubits, data has {self.n_qubits}")
        tape = tc.Tape()
        leaves = [tape.leaf(t) for t in lps.tensors]
        sites = [tc.reshape(v, lps.site4(n).shape) for n, v in enumerate(leaves)]
        p = record_probabilities(tape, sites, self.plan)
        d = p - self.targets
        loss = tc.tsum(d * d) / float(len(self.targets))
        return tape, leaves, loss

    def loss(self, lps: Lps) -> float:
        return float(self.graph(lps)[2].value)

    def loss_and_grads(self, lps: Lps):
        tape, leaves, loss = self.graph(lps)
        grads = tc.backward(tape)
        return float(loss.value), [grads[v.index] for v in leaves]


def mse_loss(lps: Lps, data: MeasurementDataset) -> float:
    return LossProblem(data).loss(lps)


def loss_gradients(lps: Lps, data: MeasurementDataset) -> list[np.ndarray]:
    """Per-site gradients ``dL/dRe(A) + 1j dL/dIm(A)``."""
    return LossProblem(data).loss_and_grads(lps)[1]


def _grad_norm(grads) -> float:
    return float(np.sqrt(sum(np.sum(np.abs(g) ** 2) for g in grads)))


class _Adam:
    def __init__(self, shapes, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros(s, dtype=complex) for s in shapes]
        self.v = [np.zeros(s, dtype=complex) for s in shapes]

    def step(self, params, grads, lr):
        c = self.cfg
        self.t += 1
        out = []
        for k, (p, g) in enumerate(zip(params, grads)):
            # real and imaginary parts are updated as independent coordinates
            m = self.m[k].view(float)
            v = self.v[k].view(float)
            gr = np.ascontiguousarray(g).view(float)
            m *= c.beta1
            m += (1 - c.beta1) * gr
            v *= c.beta2
            v += (1 - c.beta2) * gr * gr
            mhat = m / (1 - c.beta1**self.t)
            vhat = v / (1 - c.beta2**self.t)
            step = (lr * mhat / (np.sqrt(vhat) + c.adam_eps)).view(complex).reshape(p.shape)
            out.append(p - step)
        return out

    def state(self):
        return {
            "t": self.t,
            "m": [tc.tensor_to_record(x) for x in self.m],
            "v": [tc.tensor_to_record(x) for x in self.v],
        }

    def load(self, st):
        self.t = int(st["t"])
        self.m = [tc.tensor_from_record(r) for r in st["m"]]
        self.v = [tc.tensor_from_record(r) for r in st["v"]]


def _write_checkpoint(path: Path, state: dict):
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(state))
    tmp.replace(path)


def fit(
    h: LpsHyperparams,
    data: MeasurementDataset,
    cfg: TrainConfig | None = None,
    init: Lps | None = None,
    checkpoint_path=None,
    resume_from=None,
) -> tuple[Lps, TrainReport]:
    """Train an LPS on ``data``; returns the lowest-loss model seen.

    Stops after ``cfg.max_epochs`` epochs, when the loss drops to
    ``cfg.loss_floor``, or when the best loss has improved by a relative
    amount below ``cfg.tol`` for ``cfg.patience`` consecutive epochs.
    """
    cfg = cfg or TrainConfig()
    if h.n_qubits != data.n_qubits:
        raise ValueError(f"hyperparameters describe {h.n_qubits} qubits, data has {data.n_qubits}")
    t0 = time.perf_counter()
    full = LossProblem(data)
    rng = np.random.default_rng(cfg.seed)
    lps = init.copy() if init is not None else init_random(h)
    adam = _Adam([t.shape for t in lps.tensors], cfg) if cfg.optimizer == "adam" else None
    report = TrainReport()
    best = lps.copy()
    stall = 0
    start_epoch = 0
    if resume_from is not None:
        st = json.loads(Path(resume_from).read_text())
        lps = lps_from_record(st["lps"])
        best = lps_from_record(st["best"])
        report = TrainReport(**st["report"])
        stall = int(st["stall"])
        start_epoch = int(st["epoch"])
        rng.bit_generator.state = st["rng_state"]
        if adam is not None:
            adam.load(st["adam"])
    checkpoint_path = Path(checkpoint_path) if checkpoint_path is not None else None

    for epoch in range(start_epoch, cfg.max_epochs):
        try:
            if cfg.bases_per_step and cfg.bases_per_step < data.n_bases:
                pick = np.sort(rng.choice(data.n_bases, cfg.bases_per_step, replace=False))
                problem = LossProblem(data.subset(pick))
                loss = full.loss(lps)
                _, grads = problem.loss_and_grads(lps)
            else:
                problem = full
                loss, grads = problem.loss_and_grads(lps)
        except FloatingPointError as exc:
            raise TrainingDiverged(f"non-finite values at epoch {epoch}: {exc}") from exc
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at epoch {epoch}")
        gnorm = _grad_norm(grads)
        report.losses.append(loss)
        report.grad_norms.append(gnorm)
        if loss < report.best_loss:
            prev = report.best_loss
            report.best_loss = loss
            best = lps.copy()
            rel = (prev - loss) / prev if np.isfinite(prev) and prev > 0 else np.inf
        else:
            rel = 0.0
        stall = stall + 1 if rel < cfg.tol else 0
        report.epochs = epoch + 1
        if loss <= cfg.loss_floor:
            report.stop_reason = "loss floor reached"
            break
        if stall >= cfg.patience:
            report.stop_reason = "converged"
            break

        if adam is not None:
            lps = Lps(adam.step(lps.tensors, grads, cfg.learning_rate), lps.chi, lps.beta_dims)
        else:
            lps = _gd_step(problem, lps, loss, grads, cfg.learning_rate)

        if checkpoint_path is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            report.wall_time = time.perf_counter() - t0
            state = {
                "epoch": epoch + 1,
                "lps": lps_to_record(lps),
                "best": lps_to_record(best),
                "report": report.to_dict(),
                "stall": stall,
                "rng_state": rng.bit_generator.state,
            }
            if adam is not None:
                state["adam"] = adam.state()
            _write_checkpoint(checkpoint_path, state)
            report.checkpoint = str(checkpoint_path)
    else:
        report.stop_reason = "max epochs"

    report.final_loss = report.best_loss
    report.wall_time = time.perf_counter() - t0
    log.debug("fit: %d epochs, loss %.3e (%s)", report.epochs, report.final_loss, report.stop_reason)
    return best, report


def _gd_step(problem: LossProblem, lps: Lps, loss: float, grads, lr: float, max_halvings: int = 40) -> Lps:
    """Plain gradient step, halving the step until the loss does not increase."""
    step = lr
    for _ in range(max_halvings):
        cand = Lps([t - step * g for t, g in zip(lps.tensors, grads)], lps.chi, lps.beta_dims)
        if problem.loss(cand) <= loss:
            return cand
        step *= 0.5
    return lps
