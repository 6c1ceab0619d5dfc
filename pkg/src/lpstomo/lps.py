"""Locally purified state (LPS) ansatz.

Site ``n`` holds a tensor with axes ``(phys, left, right, purif)``; the first
site drops ``left`` and the last site drops ``right`` (a single site keeps only
``(phys, purif)``). The purification axis always exists and has extent 1 or 2.
The represented operator is ``rho = sum_beta L(beta) L(beta)^dagger`` where
``L(beta)`` is the matrix product vector obtained by fixing all purification
indices, so ``rho`` is positive semidefinite for any tensor values.

Purification bonds of extent 2 sit on the first ``n_beta`` sites. Virtual
bond extents are ``min(chi, left_dim, right_dim)`` where the side dims are the
products of the local ``2 * dim(beta)`` extents; larger bonds add no
expressive power.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as tc
from .povm import CollapseOutcome, LOCAL_STATES, local_index, outcome_state

__all__ = [
    "ResourceError",
    "LpsHyperparams",
    "Lps",
    "OutcomePlan",
    "init_random",
    "bond_dims",
    "prob",
    "probabilities",
    "product_probabilities",
    "trace",
    "to_dense",
    "record_probabilities",
    "save_lps",
    "load_lps",
]

CHECKPOINT_VERSION = 1


class ResourceError(RuntimeError):
    """Raised when a dense materialization would exceed the configured cap."""


@dataclass(frozen=True)
class LpsHyperparams:
    n_qubits: int
    chi: int = 2
    n_beta: int = 0
    init_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.chi < 1:
            raise ValueError("chi must be >= 1")
        if not 0 <= self.n_beta <= self.n_qubits:
            raise ValueError(f"n_beta must lie in [0, {self.n_qubits}], got {self.n_beta}")

    @property
    def scale(self) -> float:
        return 0.5 / np.sqrt(self.chi) if self.init_scale is None else float(self.init_scale)

    @property
    def beta_dims(self) -> tuple[int, ...]:
        return tuple(2 if n < self.n_beta else 1 for n in range(self.n_qubits))


def bond_dims(n_qubits: int, chi: int, beta_dims) -> list[int]:
    """Virtual bond extents between consecutive sites (length ``N - 1``)."""
    local = [2 * b for b in beta_dims]
    dims = []
    for n in range(n_qubits - 1):
        left = int(np.prod(local[: n + 1], dtype=float))
        right = int(np.prod(local[n + 1:], dtype=float))
        dims.append(int(min(chi, left, right)))
    return dims


def _site_shape(n, n_qubits, bonds, beta):
    shape = [2]
    if n > 0:
        shape.append(bonds[n - 1])
    if n < n_qubits - 1:
        shape.append(bonds[n])
    shape.append(beta)
    return tuple(shape)


@dataclass
class Lps:
    tensors: list[np.ndarray]
    chi: int
    beta_dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.tensors = [np.asarray(t, dtype=complex) for t in self.tensors]
        n = len(self.tensors)
        if n < 1:
            raise ValueError("an LPS needs at least one site")
        if not self.beta_dims:
            self.beta_dims = tuple(t.shape[-1] for t in self.tensors)
        self.beta_dims = tuple(int(b) for b in self.beta_dims)
        for k, t in enumerate(self.tensors):
            expected_ndim = 2 + (k > 0) + (k < n - 1)
            if t.ndim != expected_ndim:
                raise tc.DimensionError(f"site {k} has {t.ndim} axes, expected {expected_ndim}")
            if t.shape[0] != 2:
                raise tc.DimensionError(f"site {k} physical extent {t.shape[0]} != 2")
            if t.shape[-1] != self.beta_dims[k] or self.beta_dims[k] not in (1, 2):
                raise tc.DimensionError(f"site {k} purification extent {t.shape[-1]} invalid")
        for k in range(n - 1):
            r = self.tensors[k].shape[-2]
            l_ = self.tensors[k + 1].shape[1]
            if r != l_:
                raise tc.DimensionError(f"bond {k}-{k + 1}: {r} != {l_}")

    @property
    def n_qubits(self) -> int:
        return len(self.tensors)

    @property
    def n_beta(self) -> int:
        return sum(1 for b in self.beta_dims if b == 2)

    @property
    def bonds(self) -> list[int]:
        return [self.tensors[k].shape[-2] for k in range(self.n_qubits - 1)]

    @property
    def num_params(self) -> int:
        """Number of complex parameters."""
        return sum(t.size for t in self.tensors)

    def copy(self) -> "Lps":
        return Lps([t.copy() for t in self.tensors], self.chi, self.beta_dims)

    def site4(self, n: int) -> np.ndarray:
        return _to_site4(self.tensors[n], n, self.n_qubits)


def _to_site4(t, n, n_qubits):
    shape = t.shape
    left = shape[1] if n > 0 else 1
    right = shape[-2] if n < n_qubits - 1 else 1
    return t.reshape(2, left, right, shape[-1])


def init_random(h: LpsHyperparams) -> Lps:
    """Complex Gaussian tensors (std ``h.scale``) rescaled to unit trace."""
    rng = np.random.default_rng(h.seed)
    beta = h.beta_dims
    bonds = bond_dims(h.n_qubits, h.chi, beta)
    tensors = []
    for n in range(h.n_qubits):
        shape = _site_shape(n, h.n_qubits, bonds, beta[n])
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        tensors.append(z * (h.scale / np.sqrt(2.0)))
    lps = Lps(tensors, h.chi, beta)
    tr = trace(lps)
    factor = tr ** (-1.0 / (2 * h.n_qubits))
    lps.tensors = [t * factor for t in lps.tensors]
    return lps


# ---------------------------------------------------------------------------
# evaluation plans


def _prefix_tree(choices, n_local):
    """Distinct prefixes per level: (parents, locals) lists and the final ids."""
    n_rec, n_sites = choices.shape
    parents, locs = [], []
    prev = np.zeros(n_rec, dtype=np.intp)
    for n in range(n_sites):
        key = prev * n_local + choices[:, n]
        uniq, inv = np.unique(key, return_inverse=True)
        parents.append(uniq // n_local)
        locs.append(uniq % n_local)
        prev = inv.reshape(-1)
    return parents, locs, prev


class OutcomePlan:
    """Shared-prefix evaluation schedule for a batch of product-state outcomes.

    ``choices[k, n]`` indexes a row of ``local_states`` (the single-qubit ket
    measured on qubit ``n`` for record ``k``). The chain is cut in the middle:
    left environments are built over distinct prefixes, right environments
    over distinct suffixes, and each record joins one of each. No level ever
    holds more than ``n_local ** ceil(N / 2)`` environments.
    """

    def __init__(self, choices, local_states=LOCAL_STATES):
        choices = np.asarray(choices, dtype=np.intp)
        if choices.ndim != 2:
            raise ValueError("choices must be a (records, qubits) array")
        self.choices = choices
        self.local_states = np.asarray(local_states, dtype=complex)
        self.n_records, self.n_qubits = choices.shape
        n_local = len(self.local_states)
        self.mid = self.n_qubits // 2
        self.left_parents, self.left_locals, self.left_final = _prefix_tree(choices[:, : self.mid], n_local)
        rev = choices[:, self.mid:][:, ::-1]
        self.right_parents, self.right_locals, self.right_final = _prefix_tree(rev, n_local)


def _record_numerators(tape, sites, plan: OutcomePlan):
    """Unnormalized <v|rho|v> for every record of ``plan``, on ``tape``."""
    bra = tape.constant(np.conj(plan.local_states))
    n = len(sites)
    proj = [tc.einsum("cg,gabx->cabx", bra, a) for a in sites]
    left = tape.constant(np.ones((1, 1, 1), dtype=complex))
    for k in range(plan.mid):
        s = tc.take(proj[k], plan.left_locals[k])
        e = tc.take(left, plan.left_parents[k])
        t = tc.einsum("pac,pabx->pcbx", e, s)
        left = tc.einsum("pcbx,pcdx->pbd", t, tc.conj(s))
    right = tape.constant(np.ones((1, 1, 1), dtype=complex))
    for k in range(n - plan.mid):
        site = n - 1 - k
        s = tc.take(proj[site], plan.right_locals[k])
        e = tc.take(right, plan.right_parents[k])
        t = tc.einsum("pabx,pbd->padx", s, e)
        right = tc.einsum("padx,pcdx->pac", t, tc.conj(s))
    lk = tc.take(left, plan.left_final)
    rk = tc.take(right, plan.right_final)
    return tc.real(tc.einsum("kab,kab->k", lk, rk))


def _trace_node(tape, sites, conj_sites=None):
    env = tape.constant(np.ones((1, 1), dtype=complex))
    for n, a in enumerate(sites):
        ca = tc.conj(a) if conj_sites is None else conj_sites[n]
        t = tc.einsum("ac,gabx->cgbx", env, a)
        env = tc.einsum("cgbx,gcdx->bd", t, ca)
    return tc.real(tc.reshape(env, ()))


def record_probabilities(tape, sites, plan: OutcomePlan):
    """Normalized model probabilities for ``plan`` as a tape node.

    ``sites`` are 4-axis tape variables ``(phys, left, right, purif)``.
    """
    num = _record_numerators(tape, sites, plan)
    z = _trace_node(tape, sites)
    return num / z


def _const_sites(lps: Lps):
    tape = tc.Tape()
    return tape, [tape.constant(lps.site4(n)) for n in range(lps.n_qubits)]


def product_probabilities(lps: Lps, choices, local_states) -> np.ndarray:
    """Normalized probabilities of arbitrary product kets.

    ``choices`` is a ``(records, N)`` index array into ``local_states``.
    """
    plan = OutcomePlan(choices, local_states)
    if plan.n_qubits != lps.n_qubits:
        raise ValueError(f"outcomes have {plan.n_qubits} qubits, model has {lps.n_qubits}")
    tape, sites = _const_sites(lps)
    return record_probabilities(tape, sites, plan).value.copy()


def probabilities(lps: Lps, outcomes) -> np.ndarray:
    """Normalized probabilities for a sequence of :class:`CollapseOutcome`."""
    choices = np.array([[local_index(b, s) for b, s in zip(o.basis, o.signs)] for o in outcomes])
    for o in outcomes:
        if len(o.basis) != lps.n_qubits:
            raise ValueError(f"outcome has {len(o.basis)} qubits, model has {lps.n_qubits}")
    return product_probabilities(lps, choices, LOCAL_STATES)


def prob(lps: Lps, outcome: CollapseOutcome) -> float:
    """``<v|rho|v> / Tr(rho)`` for one collapse outcome, in O(N)."""
    if len(outcome.basis) != lps.n_qubits:
        raise ValueError(f"outcome has {len(outcome.basis)} qubits, model has {lps.n_qubits}")
    kets = np.array(outcome_state(outcome))
    choices = np.arange(lps.n_qubits)[None, :]
    return float(product_probabilities(lps, choices, kets)[0])


def trace(lps: Lps) -> float:
    tape, sites = _const_sites(lps)
    return float(_trace_node(tape, sites).value)


def to_dense(lps: Lps, max_qubits: int = 10) -> np.ndarray:
    """The unnormalized ``2^N x 2^N`` operator (qubit 0 most significant)."""
    if lps.n_qubits > max_qubits:
        raise ResourceError(f"dense materialization capped at {max_qubits} qubits, model has {lps.n_qubits}")
    # acc axes: (phys_so_far, right bond, purif_so_far)
    acc = np.ones((1, 1, 1), dtype=complex)
    for n in range(lps.n_qubits):
        a = lps.site4(n)
        acc = np.einsum("pam,gabx->pgbmx", acc, a)
        p, g, b, m, x = acc.shape
        acc = acc.reshape(p * g, b, m * x)
    mat = acc[:, 0, :]
    return mat @ mat.conj().T


# ---------------------------------------------------------------------------
# checkpoints


def lps_to_record(lps: Lps) -> dict:
    return {
        "format_version": CHECKPOINT_VERSION,
        "n_qubits": lps.n_qubits,
        "chi": lps.chi,
        "beta_dims": list(lps.beta_dims),
        "tensors": [tc.tensor_to_record(t, kind="lps-site") for t in lps.tensors],
    }


def lps_from_record(rec: dict) -> Lps:
    if rec.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {rec.get('format_version')}")
    tensors = [tc.tensor_from_record(t) for t in rec["tensors"]]
    if len(tensors) != rec["n_qubits"]:
        raise ValueError("checkpoint site count does not match header")
    return Lps(tensors, int(rec["chi"]), tuple(rec["beta_dims"]))


def save_lps(lps: Lps, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(lps_to_record(lps)))
    return path


def load_lps(path) -> Lps:
    return lps_from_record(json.loads(Path(path).read_text()))
