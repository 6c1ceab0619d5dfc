"""Uhlmann infidelity and the straight-line fits used for scaling plots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EIG_CLIP", "DegenerateFitError", "FitResult", "psd_project", "psd_sqrt", "infidelity", "linear_fit"]

EIG_CLIP = 1e-10


class DegenerateFitError(ValueError):
    """Raised when a line cannot be fitted (all abscissae equal)."""


def _eigh(m):
    m = np.asarray(m, dtype=complex)
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def psd_project(rho):
    """Clip eigenvalues below ``EIG_CLIP`` to zero and renormalize to unit trace.

    Returns ``(eigenvalues, eigenvectors)`` of the cleaned state.
    """
    lam, vec = _eigh(rho)
    lam = np.where(lam > EIG_CLIP * max(lam.max(), 1.0), lam, 0.0)
    total = lam.sum()
    if total <= 0:
        raise ValueError("state has no positive spectrum")
    return lam / total, vec


def psd_sqrt(rho) -> np.ndarray:
    lam, vec = _eigh(rho)
    return (vec * np.sqrt(np.clip(lam, 0.0, None))) @ vec.conj().T


def _root_fidelity(a, b) -> float:
    lam_a, vec_a = psd_project(a)
    lam_b, vec_b = psd_project(b)
    # work in the support of the lower-rank argument; fidelity is symmetric
    if np.count_nonzero(lam_b) < np.count_nonzero(lam_a):
        lam_a, vec_a, lam_b, vec_b = lam_b, vec_b, lam_a, vec_a
    keep = lam_a > 0
    u = vec_a[:, keep]
    s = np.sqrt(lam_a[keep])
    b_clean = (vec_b * lam_b) @ vec_b.conj().T
    m = s[:, None] * (u.conj().T @ b_clean @ u) * s[None, :]
    mu = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    mu = np.where(mu > len(mu) * np.finfo(float).eps * max(mu.max(), 0.0), mu, 0.0)
    return float(np.sum(np.sqrt(mu)))


def infidelity(a, b) -> float:
    """``1 - Tr sqrt(sqrt(a) b sqrt(a))`` for density matrices ``a`` and ``b``.

    Both arguments are cleaned with :func:`psd_project` first. The square
    root is taken in the eigenbasis of whichever argument has lower rank, so
    pure-state inputs give the overlap formula without eigenvalue noise.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return 1.0 - min(_root_fidelity(a, b), 1.0)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    residuals: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
        }


def linear_fit(points) -> FitResult:
    """Ordinary least squares ``y = slope * x + intercept``.

    ``R^2 = 1 - SS_res / SS_tot``; when the data are constant (``SS_tot = 0``)
    R^2 is reported as 1.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("linear_fit needs at least 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise DegenerateFitError("all x values are identical")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(slope, intercept, r2, resid, x, y)
