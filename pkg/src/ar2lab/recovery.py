"""Approximate-and-round recovery: the AR2 pipeline and the AR baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySampleError, ValidationError
from .linalg_core import as_matrix, round_matrix, svd, truncated_svd
from .problem_gen import GroundTruth

DEFAULT_GAP_CONSTANT = 20.0


@dataclass(frozen=True)
class RecoveryConfig:
    eps0: float
    r_max: int
    K_A: float
    K_Z: float
    gap_constant: float = DEFAULT_GAP_CONSTANT

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValidationError("eps0 must be positive")
        if self.r_max < 1:
            raise ValidationError("r_max must be >= 1")
        if self.K_A < 0 or self.K_Z < 0:
            raise ValidationError("K_A and K_Z must be non-negative")
        if self.K_A + self.K_Z <= 0:
            raise ValidationError("K_A + K_Z must be positive")
        if not self.gap_constant > 0:
            raise ValidationError("gap_constant must be positive")


@dataclass(frozen=True)
class RecoveryResult:
    p_hat: float
    s: int
    sigma_hat: np.ndarray
    A_hat_s: np.ndarray
    A_out: np.ndarray
    gap_at_s: float
    threshold_used: float

    def summary(self) -> dict:
        """JSON-ready scalars (matrices are written separately)."""
        return {
            "p_hat": self.p_hat,
            "s": self.s,
            "sigma_hat": [float(x) for x in self.sigma_hat],
            "gap_at_s": self.gap_at_s,
            "threshold_used": self.threshold_used,
        }


def gap_threshold(K_A: float, K_Z: float, r_max: int, m: int, n: int, p_hat: float,
                  gap_constant: float = DEFAULT_GAP_CONSTANT) -> float:
    """``gap_constant * (K_A + K_Z) * sqrt(r_max * (m + n) / p_hat)``."""
    return gap_constant * (K_A + K_Z) * math.sqrt(r_max * (m + n) / p_hat)


def select_cutoff(sigma_hat, threshold: float, r_max: int) -> int:
    """Largest 1-based ``s <= r_max - 1`` with ``sigma_s - sigma_{s+1} >= threshold``.

    Falls back to ``r_max`` when no gap qualifies. ``sigma_hat[s - 1]`` is
    the s-th singular value.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=np.float64)
    if sigma_hat.shape[0] < r_max:
        raise ValidationError(f"need at least r_max={r_max} singular values")
    for s in range(r_max - 1, 0, -1):
        if sigma_hat[s - 1] - sigma_hat[s] >= threshold:
            return s
    return r_max


def ar2_recover(observed, omega_size: int, cfg: RecoveryConfig) -> RecoveryResult:
    observed = as_matrix(observed, "observed")
    m, n = observed.shape
    if omega_size < 1:
        raise EmptySampleError("omega_size must be >= 1")
    if cfg.r_max > min(m, n):
        raise ValidationError(f"r_max={cfg.r_max} exceeds min(m, n)={min(m, n)}")
    p_hat = omega_size / (m * n)
    A_hat = observed / p_hat
    f = truncated_svd(A_hat, cfg.r_max)
    threshold = gap_threshold(cfg.K_A, cfg.K_Z, cfg.r_max, m, n, p_hat, cfg.gap_constant)
    s = select_cutoff(f.sigma, threshold, cfg.r_max)
    A_hat_s = f.reconstruct(s)
    gap = float(f.sigma[s - 1] - f.sigma[s]) if s < cfg.r_max else float("nan")
    return RecoveryResult(
        p_hat=p_hat,
        s=s,
        sigma_hat=f.sigma.copy(),
        A_hat_s=A_hat_s,
        A_out=round_matrix(A_hat_s, cfg.eps0),
        gap_at_s=gap,
        threshold_used=threshold,
    )


def ar_cutoff_value(N: int, r: int, mu: float) -> float:
    """Singular-value cutoff ``N / (8 r mu)`` of the AR baseline."""
    return N / (8.0 * r * mu)


def ar_recover_baseline(observed, p: float, mu: float, r: int, eps0: float) -> np.ndarray:
    """AR with a known density: keep every ``sigma_i >= N / (8 r mu)``, then round.

    ``N = max(m, n)``. Integer-grid AR is applied to the eps0 grid directly,
    which is the same as rescaling by ``1/eps0``, rounding to integers and
    scaling back.
    """
    observed = as_matrix(observed, "observed")
    if not 0 < p <= 1:
        raise ValidationError("p must lie in (0, 1]")
    if not np.any(observed) and p < 1:
        raise EmptySampleError("observed matrix has no samples")
    if mu <= 0 or r < 1:
        raise ValidationError("mu must be positive and r >= 1")
    f = svd(observed / p)
    cutoff = ar_cutoff_value(max(observed.shape), r, mu)
    s = int(np.count_nonzero(f.sigma >= cutoff))
    return round_matrix(f.reconstruct(s), eps0)


@dataclass(frozen=True)
class Verdict:
    exact: bool
    n_errors: int
    max_abs_dev: float

    def __str__(self):
        if self.exact:
            return "exact"
        return f"entry_errors({self.n_errors}, {self.max_abs_dev:g})"


def exact_recovery_verdict(A_out, gt: GroundTruth) -> Verdict:
    """Exact iff both sides agree bit-for-bit after rounding to gt's grid."""
    A_out = as_matrix(A_out, "A_out")
    if A_out.shape != gt.A.shape:
        raise ValidationError("A_out and ground truth shapes disagree")
    if gt.eps0 is None:
        raise ValidationError("ground truth has no precision grid")
    lhs, rhs = round_matrix(A_out, gt.eps0), round_matrix(gt.A, gt.eps0)
    wrong = lhs != rhs
    count = int(np.count_nonzero(wrong))
    dev = float(np.max(np.abs(lhs - rhs))) if count else 0.0
    return Verdict(exact=count == 0, n_errors=count, max_abs_dev=dev)
