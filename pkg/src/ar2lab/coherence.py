"""Incoherence diagnostics of singular subspaces."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .linalg_core import SvdFactors


@dataclass(frozen=True)
class CoherenceReport:
    mu_U: float
    mu_V: float
    mu0: float
    mu1: float
    r: int
    U_inf: float
    V_inf: float
    U_2inf: float
    V_2inf: float

    def as_dict(self) -> dict:
        return asdict(self)


def subspace_coherence(U: np.ndarray) -> float:
    """``mu(U) = (m / r) * max_i ||e_i^T U||^2`` for an m x r orthonormal U."""
    m, r = U.shape
    return float(m / r * np.max(np.sum(U * U, axis=1)))


def coherence(f: SvdFactors, r: int) -> CoherenceReport:
    """Coherence of the leading ``r`` singular vectors of ``f``."""
    if r < 1:
        raise ValidationError("r must be >= 1")
    if r > f.k:
        raise ValidationError(f"r={r} exceeds the {f.k} available singular vectors")
    U, V = f.U[:, :r], f.V[:, :r]
    m, n = U.shape[0], V.shape[0]
    mu_U, mu_V = subspace_coherence(U), subspace_coherence(V)
    mu1 = np.sqrt(m * n / r) * np.max(np.abs(U @ V.T))
    return CoherenceReport(
        mu_U=mu_U,
        mu_V=mu_V,
        mu0=max(mu_U, mu_V),
        mu1=float(mu1),
        r=r,
        U_inf=float(np.max(np.abs(U))),
        V_inf=float(np.max(np.abs(V))),
        U_2inf=float(np.sqrt(np.max(np.sum(U * U, axis=1)))),
        V_2inf=float(np.sqrt(np.max(np.sum(V * V, axis=1)))),
    )
