"""Least-squares (linear inversion) tomography baseline.

Every measured basis yields estimates of the ``2^N`` Pauli strings obtained by
replacing any subset of its letters with identities. Estimates of the same
string from different bases are averaged (the least-squares solution for
repeated observations of one coefficient), unmeasured strings are set to 0,
and the resulting Hermitian operator is projected onto the set of density
matrices by projecting its spectrum onto the probability simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .povm import PAULI, MeasurementDataset

__all__ = ["LsEstimate", "simplex_projection", "pauli_expectations", "ls_reconstruct"]

MAX_QUBITS = 6
_SIGN = np.array([[1.0, 1.0], [1.0, -1.0]])  # row 0: identity, row 1: Pauli
_PAULI_STACK = np.array([PAULI[c] for c in "IXYZ"])
_CODE = {"X": 1, "Y": 2, "Z": 3}


@dataclass
class LsEstimate:
    rho: np.ndarray
    raw: np.ndarray
    residual_norm: float
    coefficients: np.ndarray


def simplex_projection(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= 0, sum x = 1}``."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def pauli_expectations(data: MeasurementDataset):
    """Averaged Pauli-string estimates.

    Returns ``(coef, hits)`` with shape ``(4,) * N`` each, indexed by
    ``I, X, Y, Z`` codes per qubit; ``hits`` counts covering bases.
    """
    n = data.n_qubits
    coef = np.zeros((4,) * n)
    hits = np.zeros((4,) * n, dtype=int)
    for basis, row in zip(data.bases, data.freqs):
        t = row.reshape((2,) * n)
        for q in range(n):
            t = np.moveaxis(np.tensordot(_SIGN, t, axes=([1], [q])), 0, q)
        # t[s] with s_q = 0 (identity) or 1 (basis letter)
        idx = tuple(np.array([0, _CODE[c]]) for c in basis)
        grid = np.ix_(*idx)
        coef[grid] += t
        hits[grid] += 1
    mask = hits > 0
    coef[mask] /= hits[mask]
    return coef, hits


def ls_reconstruct(data: MeasurementDataset) -> LsEstimate:
    n = data.n_qubits
    if data.n_bases == 0:
        raise ValueError("least-squares tomography needs at least one basis")
    if n > MAX_QUBITS:
        raise ValueError(f"dense LS reconstruction limited to {MAX_QUBITS} qubits")
    coef, hits = pauli_expectations(data)
    # rho = 2^-N sum_w c_w sigma_w, assembled one qubit at a time
    t = coef.astype(complex)
    for q in range(n):
        t = np.tensordot(t, _PAULI_STACK, axes=([0], [0]))  # consumes leading code axis
    # t axes: (i0, j0, i1, j1, ...)
    perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    raw = np.transpose(t, perm).reshape(2**n, 2**n) / 2**n
    raw = 0.5 * (raw + raw.conj().T)
    # residual of the averaged estimates against the per-basis observations
    resid = 0.0
    for basis, row in zip(data.bases, data.freqs):
        t2 = row.reshape((2,) * n)
        for q in range(n):
            t2 = np.moveaxis(np.tensordot(_SIGN, t2, axes=([1], [q])), 0, q)
        idx = tuple(np.array([0, _CODE[c]]) for c in basis)
        resid += float(np.sum((coef[np.ix_(*idx)] - t2) ** 2))
    lam, vec = np.linalg.eigh(raw)
    lam = simplex_projection(lam)
    rho = (vec * lam) @ vec.conj().T
    return LsEstimate(rho, raw, float(np.sqrt(resid)), coef)
