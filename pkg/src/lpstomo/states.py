"""Dense target states: random mixed states, phased GHZ, depolarizing noise."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import tensor as tc

__all__ = [
    "check_density_matrix",
    "n_qubits_of",
    "haar_state",
    "ginibre_state",
    "random_mixed",
    "ghz_vector",
    "ghz",
    "ghz_local_kets",
    "depolarize",
    "purity",
    "von_neumann_entropy",
    "save_density_matrix",
    "load_density_matrix",
]

ENTROPY_CLIP = 1e-12


def n_qubits_of(rho) -> int:
    dim = np.shape(rho)[0]
    n = int(round(np.log2(dim)))
    if np.shape(rho) != (dim, dim) or 2**n != dim:
        raise ValueError(f"shape {np.shape(rho)} is not 2^N x 2^N")
    return n


def check_density_matrix(rho, herm_tol=1e-12, trace_tol=1e-12, eig_tol=1e-10) -> np.ndarray:
    """Return ``rho`` as a complex array or raise if it is not a valid state."""
    rho = np.asarray(rho, dtype=complex)
    n_qubits_of(rho)
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def haar_state(dim: int, rng) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def ginibre_state(dim: int, rng) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    w = g @ g.conj().T
    return w / np.trace(w).real


def _hermitize(m):
    return 0.5 * (m + m.conj().T)


def random_mixed(n_qubits: int, target_purity: float, seed=None, tol: float = 1e-6, max_retries: int = 10):
    """Random state with ``Tr(rho^2)`` equal to ``target_purity``.

    Mixes a Haar-random pure state into a Ginibre-distributed mixed state,
    ``(1 - p)|psi><psi| + p W``, solving for ``p`` on the branch where the
    purity decreases monotonically. Purities below that branch's minimum are
    reached by further mixing the minimizer with ``I / 2^N``, so every value
    in ``[2^-N, 1]`` is attainable.
    """
    dim = 2**n_qubits
    if not 1.0 / dim - 1e-15 <= target_purity <= 1.0 + 1e-15:
        raise ValueError(f"target purity must lie in [{1.0 / dim}, 1], got {target_purity}")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        psi = haar_state(dim, rng)
        w = ginibre_state(dim, rng)
        pure = np.outer(psi, psi.conj())
        a = float(np.real(psi.conj() @ w @ psi))
        b = float(np.real(np.sum(np.abs(w) ** 2)))
        # purity(p) = (1-p)^2 + 2p(1-p)a + p^2 b
        curv = 1.0 - 2.0 * a + b
        p_min = min(1.0, (1.0 - a) / curv) if curv > 0 else 1.0

        def mix(p):
            return (1.0 - p) * pure + p * w

        def f(p):
            return (1.0 - p) ** 2 + 2.0 * p * (1.0 - p) * a + p * p * b - target_purity

        if target_purity >= 1.0:
            rho = pure
        elif f(p_min) <= 0.0:
            p = brentq(f, 0.0, p_min, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            rho = mix(p)
        else:
            base = mix(p_min)
            eye = np.eye(dim) / dim
            pb = float(np.real(np.sum(np.abs(base) ** 2)))

            def g(q):
                return (1.0 - q) ** 2 * pb + (2.0 * q * (1.0 - q) + q * q) / dim - target_purity

            q = 1.0 if g(1.0) >= 0.0 else brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            rho = (1.0 - q) * base + q * eye
        rho = _hermitize(rho)
        rho = rho / np.trace(rho).real
        if abs(purity(rho) - target_purity) <= tol:
            return rho
    raise RuntimeError(f"could not reach purity {target_purity} after {max_retries} draws")


def ghz_local_kets(n_qubits: int, gammas) -> np.ndarray:
    """``(N, 2, 2)``: ``[n, 0]`` is |+_n>, ``[n, 1]`` is |-_n>."""
    gammas = np.asarray(gammas, dtype=float)
    if gammas.shape != (n_qubits,):
        raise ValueError(f"need {n_qubits} local phases, got {gammas.shape}")
    ph = (1j**n_qubits) * np.exp(1j * gammas)
    s = 1.0 / np.sqrt(2.0)
    kets = np.empty((n_qubits, 2, 2), dtype=complex)
    kets[:, 0, 0] = s
    kets[:, 0, 1] = s * ph
    kets[:, 1, 0] = s
    kets[:, 1, 1] = -s * ph
    return kets


def ghz_vector(n_qubits: int, beta: float = 0.0, gammas=None) -> np.ndarray:
    """``(|+...+> + e^{i beta} |-...->)/sqrt2`` with ``|+-_n> = (|0> +- i^N e^{i gamma_n}|1>)/sqrt2``."""
    gammas = np.zeros(n_qubits) if gammas is None else gammas
    kets = ghz_local_kets(n_qubits, gammas)
    plus = np.array([1.0 + 0j])
    minus = np.array([1.0 + 0j])
    for n in range(n_qubits):
        plus = np.kron(plus, kets[n, 0])
        minus = np.kron(minus, kets[n, 1])
    return (plus + np.exp(1j * beta) * minus) / np.sqrt(2.0)


def ghz(n_qubits: int, beta: float = 0.0, gammas=None) -> np.ndarray:
    v = ghz_vector(n_qubits, beta, gammas)
    return np.outer(v, v.conj())


def depolarize(rho, eps: float) -> np.ndarray:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"noise strength must lie in [0, 1], got {eps}")
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    if eps == 0.0:
        return rho.copy()
    return (1.0 - eps) * rho + eps * np.eye(dim) / dim


def purity(rho) -> float:
    rho = np.asarray(rho)
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(rho) ** 2))


def von_neumann_entropy(rho) -> float:
    """``-Tr(rho ln rho)`` in nats."""
    lam = np.linalg.eigvalsh(_hermitize(np.asarray(rho, dtype=complex)))
    lam = lam[lam > ENTROPY_CLIP]
    return float(-np.sum(lam * np.log(lam)))


def save_density_matrix(rho, path) -> Path:
    path = Path(path)
    path.write_text(tc.dumps_tensor(rho, kind="density-matrix"))
    return path


def load_density_matrix(path) -> np.ndarray:
    rec = json.loads(Path(path).read_text())
    if rec.get("kind") != "density-matrix":
        raise ValueError(f"expected a density-matrix record, got kind {rec.get('kind')!r}")
    return tc.tensor_from_record(rec)
