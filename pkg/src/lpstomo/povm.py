"""Pauli-product measurement bases, collapse outcomes and shot simulation.

A basis is a string over ``{"X", "Y", "Z"}`` (one letter per qubit, qubit 0
first). An outcome inside a basis is a bitstring of the same length, bit 0
selecting the +1 eigenstate and bit 1 the -1 eigenstate. Outcome index ``k``
within a basis reads the bitstring as a big-endian integer.

Eigenvector phase convention: Z -> (1, 0), (0, 1); X -> (1, +-1)/sqrt2;
Y -> (1, +-i)/sqrt2.

Dataset file (JSON lines)::

    {"version": 1, "n_qubits": N, "n_bases": M, "n_shots": S, "metadata": {...}}
    {"basis": "XZY", "counts": {"010": 17, ...}}         # finite shots
    {"basis": "XZY", "probs": {"010": 0.0625, ...}}      # n_shots == 0

Only nonzero entries are written. With finite shots, frequencies are
recomputed as ``count / n_shots`` on load. ``n_shots == 0`` denotes the
infinite-statistics mode where exact probabilities are stored as floats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PAULI",
    "LOCAL_STATES",
    "CollapseOutcome",
    "MeasurementDataset",
    "local_index",
    "validate_basis",
    "all_bases",
    "sample_bases",
    "outcome_state",
    "basis_kets",
    "basis_probabilities",
    "exact_distribution",
    "sample_dataset",
    "save_dataset",
    "load_dataset",
    "DATASET_VERSION",
]

DATASET_VERSION = 1
LETTERS = "XYZ"
_S = 1.0 / np.sqrt(2.0)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# rows ordered X+, X-, Y+, Y-, Z+, Z-
LOCAL_STATES = np.array(
    [
        [_S, _S],
        [_S, -_S],
        [_S, 1j * _S],
        [_S, -1j * _S],
        [1.0, 0.0],
        [0.0, 1.0],
    ],
    dtype=complex,
)


def local_index(letter: str, sign) -> int:
    return 2 * LETTERS.index(letter) + int(sign)


def validate_basis(basis: str, n_qubits: int | None = None) -> str:
    if not basis or any(c not in LETTERS for c in basis):
        raise ValueError(f"basis must be a non-empty string over X/Y/Z, got {basis!r}")
    if n_qubits is not None and len(basis) != n_qubits:
        raise ValueError(f"basis {basis!r} has {len(basis)} letters, expected {n_qubits}")
    return basis


@dataclass(frozen=True)
class CollapseOutcome:
    basis: str
    signs: str

    def __post_init__(self):
        validate_basis(self.basis)
        if len(self.signs) != len(self.basis) or any(c not in "01" for c in self.signs):
            raise ValueError(f"signs {self.signs!r} must be a bitstring of length {len(self.basis)}")


def _index_to_basis(i: int, n: int) -> str:
    letters = []
    for _ in range(n):
        i, r = divmod(i, 3)
        letters.append(LETTERS[r])
    return "".join(reversed(letters))


def all_bases(n_qubits: int) -> list[str]:
    return [_index_to_basis(i, n_qubits) for i in range(3**n_qubits)]


def sample_bases(n_qubits: int, n_m: int, seed=None) -> list[str]:
    """``n_m`` distinct bases drawn uniformly without replacement."""
    total = 3**n_qubits
    if not 0 < n_m <= total:
        raise ValueError(f"cannot draw {n_m} distinct bases out of {total}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=n_m, replace=False)
    return [_index_to_basis(int(i), n_qubits) for i in picks]


def outcome_state(o: CollapseOutcome) -> list[np.ndarray]:
    return [LOCAL_STATES[local_index(b, s)].copy() for b, s in zip(o.basis, o.signs)]


def basis_kets(basis: str) -> np.ndarray:
    """``(N, 2, 2)`` array; ``[n, s]`` is the ket for sign ``s`` on qubit ``n``."""
    validate_basis(basis)
    return np.array([[LOCAL_STATES[local_index(b, 0)], LOCAL_STATES[local_index(b, 1)]] for b in basis])


def _n_qubits_of(rho) -> int:
    dim = rho.shape[0]
    n = int(round(np.log2(dim)))
    if rho.shape != (dim, dim) or 2**n != dim:
        raise ValueError(f"density matrix shape {rho.shape} is not 2^N x 2^N")
    return n


def basis_probabilities(rho, basis: str) -> np.ndarray:
    """All ``2^N`` probabilities ``<v|rho|v>`` for one basis, as an array."""
    rho = np.asarray(rho, dtype=complex)
    n = _n_qubits_of(rho)
    validate_basis(basis, n)
    kets = basis_kets(basis)
    t = rho.reshape((2,) * (2 * n))
    # rotate ket indices by <v| and bra indices by |v>
    for q in range(n):
        bra = np.conj(kets[q])  # (sign, phys)
        t = np.tensordot(bra, t, axes=([1], [q]))
        t = np.moveaxis(t, 0, q)
        t = np.tensordot(t, kets[q], axes=([n + q], [1]))
        t = np.moveaxis(t, -1, n + q)
    diag = t.reshape(2**n, 2**n).diagonal()
    return np.real(diag).copy()


def exact_distribution(rho, basis: str) -> dict[str, float]:
    """Outcome bitstring -> probability for a normalized target."""
    rho = np.asarray(rho, dtype=complex)
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-8:
        from .tensor import ContractViolation

        raise ContractViolation(f"target trace is {tr.real:.3g}, expected 1")
    n = _n_qubits_of(rho)
    p = basis_probabilities(rho, basis)
    return {format(k, f"0{n}b"): float(p[k]) for k in range(2**n)}


@dataclass
class MeasurementDataset:
    """Per-basis outcome frequencies.

    ``freqs[m, k]`` is the frequency of outcome ``k`` under ``bases[m]``.
    ``counts`` holds the raw shot counts when ``n_shots > 0``.
    """

    n_qubits: int
    bases: list[str]
    freqs: np.ndarray
    n_shots: int
    counts: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        for b in self.bases:
            validate_basis(b, self.n_qubits)
        if len(set(self.bases)) != len(self.bases):
            raise ValueError("dataset bases must be distinct")
        if self.freqs.shape != (len(self.bases), 2**self.n_qubits):
            raise ValueError(f"freqs shape {self.freqs.shape} inconsistent with bases")
        sums = self.freqs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("per-basis frequencies must sum to 1")

    @property
    def n_bases(self) -> int:
        return len(self.bases)

    @property
    def records(self) -> list[tuple[str, dict[str, float]]]:
        """Sparse view: (basis, {outcome: frequency}) for observed outcomes."""
        out = []
        for b, row in zip(self.bases, self.freqs):
            out.append((b, {format(k, f"0{self.n_qubits}b"): float(f) for k, f in enumerate(row) if f != 0}))
        return out

    def outcome_choices(self) -> np.ndarray:
        """``(N_m * 2^N, N)`` local-state indices, basis-major then outcome."""
        n = self.n_qubits
        bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        rows = []
        for b in self.bases:
            letters = np.array([LETTERS.index(c) for c in b])
            rows.append(2 * letters[None, :] + bits)
        return np.concatenate(rows, axis=0)

    def subset(self, indices) -> "MeasurementDataset":
        idx = list(indices)
        return MeasurementDataset(
            self.n_qubits,
            [self.bases[i] for i in idx],
            self.freqs[idx],
            self.n_shots,
            None if self.counts is None else self.counts[idx],
            dict(self.metadata),
        )


def sample_dataset(rho, bases, n_shots: int, seed=0, metadata=None) -> MeasurementDataset:
    """Simulate ``n_shots`` measurements per basis (``0`` = exact probabilities).

    Basis ``m`` draws from its own stream seeded by ``(seed, m)``.
    """
    rho = np.asarray(rho, dtype=complex)
    n = _n_qubits_of(rho)
    if n_shots < 0:
        raise ValueError("n_shots must be >= 0")
    bases = [validate_basis(b, n) for b in bases]
    freqs = np.empty((len(bases), 2**n))
    counts = None if n_shots == 0 else np.empty((len(bases), 2**n), dtype=np.int64)
    for m, b in enumerate(bases):
        p = np.clip(basis_probabilities(rho, b), 0.0, None)
        p = p / p.sum()
        if n_shots == 0:
            freqs[m] = p
        else:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), m]))
            counts[m] = rng.multinomial(n_shots, p)
            freqs[m] = counts[m] / n_shots
    meta = {"seed": int(seed)}
    meta.update(metadata or {})
    return MeasurementDataset(n, bases, freqs, int(n_shots), counts, meta)


def save_dataset(data: MeasurementDataset, path) -> Path:
    path = Path(path)
    n = data.n_qubits
    lines = [
        json.dumps(
            {
                "version": DATASET_VERSION,
                "n_qubits": n,
                "n_bases": data.n_bases,
                "n_shots": data.n_shots,
                "metadata": data.metadata,
            }
        )
    ]
    for m, b in enumerate(data.bases):
        if data.n_shots == 0:
            row = {format(k, f"0{n}b"): float(f) for k, f in enumerate(data.freqs[m]) if f != 0}
            lines.append(json.dumps({"basis": b, "probs": row}))
        else:
            row = {format(k, f"0{n}b"): int(c) for k, c in enumerate(data.counts[m]) if c != 0}
            lines.append(json.dumps({"basis": b, "counts": row}))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_dataset(path) -> MeasurementDataset:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    header = json.loads(lines[0])
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('version')}")
    n = int(header["n_qubits"])
    n_shots = int(header["n_shots"])
    bases, rows = [], []
    for ln in lines[1:]:
        rec = json.loads(ln)
        bases.append(rec["basis"])
        row = np.zeros(2**n, dtype=np.int64 if n_shots else float)
        for key, v in rec["counts" if n_shots else "probs"].items():
            row[int(key, 2)] = v
        rows.append(row)
    if len(bases) != int(header["n_bases"]):
        raise ValueError("dataset header n_bases does not match body")
    arr = np.array(rows)
    if n_shots:
        return MeasurementDataset(n, bases, arr / n_shots, n_shots, arr, header.get("metadata", {}))
    return MeasurementDataset(n, bases, arr, 0, None, header.get("metadata", {}))
