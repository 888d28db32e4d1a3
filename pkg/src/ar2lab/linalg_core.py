"""Dense matrix primitives: SVD with a fixed sign convention, norms, grid
rounding and the symmetric dilation.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Functions never
mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, SvdConvergenceError, ValidationError

#: relative threshold (times sigma_1) below which a singular value is zero
RANK_RTOL = 1e-10

NORM_KINDS = ("operator", "frobenius", "infinity", "two_to_infinity")


def as_matrix(A, name="A") -> np.ndarray:
    """Validate ``A`` as a finite 2-d float array and return it as float64."""
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U diag(sigma) V^T`` with k = len(sigma) columns.

    ``numerical_rank`` counts singular values >= RANK_RTOL * sigma_1; the
    trailing columns are still orthonormal but carry no signal.
    """

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    numerical_rank: int

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self, s: int | None = None) -> np.ndarray:
        """Return ``sum_{i<=s} sigma_i u_i v_i^T`` (all columns if ``s`` is None)."""
        s = self.k if s is None else s
        return (self.U[:, :s] * self.sigma[:s]) @ self.V[:, :s].T

    def truncate(self, k: int) -> "SvdFactors":
        return SvdFactors(
            U=self.U[:, :k].copy(),
            sigma=self.sigma[:k].copy(),
            V=self.V[:, :k].copy(),
            numerical_rank=min(self.numerical_rank, k),
        )


def _fix_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-|.| entry of each u_i positive; argmax returns the lowest index on ties
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def numerical_rank(sigma: np.ndarray) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.count_nonzero(sigma >= RANK_RTOL * sigma[0]))


def svd(A) -> SvdFactors:
    """Thin SVD with k = min(m, n) and the deterministic sign convention.

    Backed by LAPACK ``gesdd`` (falling back to ``gesvd``); a non-converged
    factorisation raises :class:`SvdConvergenceError`.
    """
    A = as_matrix(A)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg

            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SvdConvergenceError(f"SVD did not converge for {A.shape} input") from exc
    U, V = _fix_signs(U, Vt.T)
    return SvdFactors(U=U, sigma=s, V=V, numerical_rank=numerical_rank(s))


def truncated_svd(A, k: int) -> SvdFactors:
    A = as_matrix(A)
    if not 1 <= k <= min(A.shape):
        raise ValidationError(f"k={k} outside [1, {min(A.shape)}]")
    return svd(A).truncate(k)


def norm(A, kind: str) -> float:
    """Operator, Frobenius, max-entry (``infinity``) or max-row (``two_to_infinity``) norm."""
    A = as_matrix(A)
    if kind == "operator":
        return float(np.linalg.svd(A, compute_uv=False)[0])
    if kind == "frobenius":
        return float(np.sqrt(np.sum(A * A)))
    if kind == "infinity":
        return float(np.max(np.abs(A)))
    if kind == "two_to_infinity":
        return float(np.max(np.sqrt(np.sum(A * A, axis=1))))
    raise ValidationError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def _round_array(x: np.ndarray, eps0: float) -> np.ndarray:
    q = x / eps0
    k = np.sign(q) * np.floor(np.abs(q) + 0.5)
    # x / eps0 may be off by an ulp; pick the truly nearest of the neighbours
    best = k.copy()
    best_d = np.abs(x - k * eps0)
    for shift in (-1.0, 1.0):
        cand = k + shift
        d = np.abs(x - cand * eps0)
        better = (d < best_d) | ((d == best_d) & (np.abs(cand) > np.abs(best)))
        best = np.where(better, cand, best)
        best_d = np.where(better, d, best_d)
    return best * eps0 + 0.0  # + 0.0 turns -0.0 into 0.0


def round_to_grid(x: float, eps0: float) -> float:
    """Nearest integer multiple of ``eps0``; exact ties go away from zero."""
    if not eps0 > 0:
        raise ValidationError("eps0 must be positive")
    return float(_round_array(np.asarray(float(x)), float(eps0)))


def round_matrix(A, eps0: float) -> np.ndarray:
    if not eps0 > 0:
        raise ValidationError("eps0 must be positive")
    return _round_array(as_matrix(A), float(eps0))


def symmetrize(A) -> np.ndarray:
    """The dilation ``[[0, A], [A^T, 0]]``."""
    A = as_matrix(A)
    m, n = A.shape
    out = np.zeros((m + n, m + n))
    out[:m, m:] = A
    out[m:, :m] = A.T
    return out


@dataclass(frozen=True)
class SymmetrizedSystem:
    """Top 2r eigenpairs of ``symmetrize(A)`` built from the SVD of ``A``.

    Column ``i < r`` of ``W`` is ``(u_i, v_i)/sqrt(2)`` with eigenvalue
    ``sigma_i``; column ``r + i`` is ``(u_i, -v_i)/sqrt(2)`` with eigenvalue
    ``-sigma_i``. The complementary projector ``Q = I - W W^T`` is implicit.
    """

    m: int
    n: int
    r: int
    lam: np.ndarray
    W: np.ndarray

    @property
    def dim(self) -> int:
        return self.m + self.n

    def projector(self, i: int) -> np.ndarray:
        """``P_i = w_i w_i^T`` for a 0-based column index ``i``."""
        w = self.W[:, i]
        return np.outer(w, w)

    def Q(self) -> np.ndarray:
        return np.eye(self.dim) - self.W @ self.W.T

    def resolvent(self, z: complex) -> np.ndarray:
        """``(z I - sym(A))^{-1} = sum_i P_i / (z - lam_i) + Q / z``."""
        WD = self.W / (z - self.lam)
        return WD @ self.W.T + self.Q() / z


def build_symmetrized_system(f: SvdFactors, r: int) -> SymmetrizedSystem:
    if r < 1 or r > f.k:
        raise RankError(f"r={r} outside [1, {f.k}]")
    if f.sigma[r - 1] < RANK_RTOL * f.sigma[0] or f.sigma[0] == 0:
        raise RankError(f"r={r} exceeds the numerical rank {f.numerical_rank}")
    m, n = f.U.shape[0], f.V.shape[0]
    U, V = f.U[:, :r], f.V[:, :r]
    W = np.vstack([np.hstack([U, U]), np.hstack([V, -V])]) / np.sqrt(2.0)
    lam = np.concatenate([f.sigma[:r], -f.sigma[:r]])
    return SymmetrizedSystem(m=m, n=n, r=r, lam=lam, W=W)
