"""Grid-aligned low-rank ground truths, Bernoulli sample masks, bounded noise
and the observed matrix they produce.

Randomness comes from counter-based Philox streams keyed by
``(seed, *substream_ids)`` so that any trial can be regenerated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EmptySampleError, GenerationError, ValidationError
from .linalg_core import SvdFactors, as_matrix, svd

NOISE_KINDS = ("uniform_bounded", "rademacher_scaled", "zero")
MAX_RANK_ATTEMPTS = 100

# substream tags
STREAM_TRUTH, STREAM_MASK, STREAM_NOISE = 1, 2, 3


def rng_for(seed: int, *ids: int) -> np.random.Generator:
    """Independent Philox generator for the substream ``ids`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))


def _normalize_subset(S: Iterable[int], r: int) -> tuple[int, ...]:
    S = tuple(sorted(set(int(i) for i in S)))
    if not S:
        raise ValidationError("index set S must be non-empty")
    if S[0] < 1 or S[-1] > r:
        raise ValidationError(f"S={S} must be a subset of [1, {r}]")
    return S


@dataclass(frozen=True)
class GroundTruth:
    """Hidden rank-r matrix together with its SVD and gap statistics.

    Index sets ``S`` are 1-based subsets of ``[r]``; ``sigma_{r+1}`` is taken
    as 0 so the last gap is ``delta_r = sigma_r``.
    """

    A: np.ndarray
    factors: SvdFactors
    r: int
    eps0: float | None
    K_A: float
    seed: int | None = None
    attempts: int = 1

    @classmethod
    def from_matrix(cls, A, r: int, eps0: float | None = None, seed=None) -> "GroundTruth":
        A = as_matrix(A)
        f = svd(A)
        if f.numerical_rank != r:
            raise GenerationError(f"matrix has numerical rank {f.numerical_rank}, expected {r}")
        return cls(A=A, factors=f, r=r, eps0=eps0, K_A=float(np.max(np.abs(A))), seed=seed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def sigma(self) -> np.ndarray:
        return self.factors.sigma[: self.r]

    @property
    def U(self) -> np.ndarray:
        return self.factors.U[:, : self.r]

    @property
    def V(self) -> np.ndarray:
        return self.factors.V[:, : self.r]

    @property
    def delta(self) -> np.ndarray:
        """``delta[k-1] = sigma_k - sigma_{k+1}`` for k in [r]."""
        padded = np.append(self.sigma, 0.0)
        return padded[:-1] - padded[1:]

    @property
    def Delta(self) -> np.ndarray:
        """``Delta_k = min(delta_k, delta_{k-1})`` with ``delta_0 = inf``."""
        d = self.delta
        prev = np.concatenate([[np.inf], d[:-1]])
        return np.minimum(d, prev)

    def sigma_S(self, S: Iterable[int]) -> float:
        S = _normalize_subset(S, self.r)
        return float(min(self.sigma[i - 1] for i in S))

    def Delta_S(self, S: Iterable[int]) -> float:
        """Distance from {sigma_i : i in S} to the other singular values and 0."""
        S = _normalize_subset(S, self.r)
        inside = [self.sigma[i - 1] for i in S]
        outside = [self.sigma[j - 1] for j in range(1, self.r + 1) if j not in S] + [0.0]
        return float(min(abs(a - b) for a in inside for b in outside))

    def A_s(self, s: int) -> np.ndarray:
        return self.factors.reconstruct(s)


def gen_ground_truth(m: int, n: int, r: int, b: int, eps0: float, seed: int) -> GroundTruth:
    """``A = eps0 * X @ Y.T`` with X, Y uniform on ``{-b, ..., b}``.

    Rank-deficient draws are discarded whole and redrawn from the next
    substream, up to :data:`MAX_RANK_ATTEMPTS` times.
    """
    if not (1 <= r <= min(m, n)):
        raise ValidationError(f"r={r} must lie in [1, min(m, n)={min(m, n)}]")
    if b < 1:
        raise ValidationError("factor bound b must be >= 1")
    if not eps0 > 0:
        raise ValidationError("eps0 must be positive")
    for attempt in range(MAX_RANK_ATTEMPTS):
        rng = rng_for(seed, STREAM_TRUTH, attempt)
        X = rng.integers(-b, b + 1, size=(m, r))
        Y = rng.integers(-b, b + 1, size=(n, r))
        # integer product is exact; a single scaling keeps entries on the grid
        A = (X @ Y.T).astype(np.float64) * eps0
        f = svd(A)
        if f.numerical_rank == r:
            return GroundTruth(
                A=A,
                factors=f,
                r=r,
                eps0=float(eps0),
                K_A=float(np.max(np.abs(A))),
                seed=int(seed),
                attempts=attempt + 1,
            )
    raise GenerationError(
        f"{MAX_RANK_ATTEMPTS} consecutive rank-deficient draws for m={m}, n={n}, r={r}, b={b}"
    )


@dataclass(frozen=True)
class SampleMask:
    mask: np.ndarray
    p: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @property
    def omega_size(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def p_hat(self) -> float:
        return self.omega_size / self.mask.size

    @property
    def rho(self) -> float:
        return self.p_hat / self.p


def sample_mask(m: int, n: int, p: float, seed: int) -> SampleMask:
    """Include every entry independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ValidationError(f"sampling density p={p} must lie in (0, 1]")
    rng = rng_for(seed, STREAM_MASK)
    mask = np.ones((m, n), dtype=bool) if p == 1 else rng.random((m, n)) < p
    out = SampleMask(mask=mask, p=float(p))
    if out.omega_size == 0:
        raise EmptySampleError(f"no entries sampled (m={m}, n={n}, p={p})")
    return out


@dataclass(frozen=True)
class NoiseSpec:
    """Independent centred noise with ``|Z_ij| <= K_Z`` (hence E|Z|^l <= K_Z^l)."""

    K_Z: float = 0.0
    distribution: str = "zero"

    def __post_init__(self):
        if self.distribution not in NOISE_KINDS:
            raise ValidationError(f"unknown noise distribution {self.distribution!r}")
        if self.K_Z < 0:
            raise ValidationError("K_Z must be non-negative")


def gen_noise(m: int, n: int, spec: NoiseSpec, seed: int) -> np.ndarray:
    if spec.distribution == "zero" or spec.K_Z == 0:
        return np.zeros((m, n))
    rng = rng_for(seed, STREAM_NOISE)
    if spec.distribution == "uniform_bounded":
        return rng.uniform(-spec.K_Z, spec.K_Z, size=(m, n))
    return spec.K_Z * (2.0 * rng.integers(0, 2, size=(m, n)) - 1.0)


@dataclass(frozen=True)
class Observation:
    """The observed matrix and the rescalings derived from it.

    ``E = observed / p - A`` is the (unbiased) perturbation seen by the
    analysis; ``rescaled_est`` is what the algorithm actually works with.
    """

    observed: np.ndarray
    mask: SampleMask
    rescaled_true: np.ndarray
    rescaled_est: np.ndarray
    E: np.ndarray


def observe(gt: GroundTruth, mask: SampleMask, Z) -> Observation:
    Z = as_matrix(Z, "Z")
    if gt.A.shape != mask.shape or Z.shape != gt.A.shape:
        raise ValidationError("ground truth, mask and noise shapes disagree")
    if mask.omega_size == 0:
        raise EmptySampleError("empty sample mask")
    observed = np.where(mask.mask, gt.A + Z, 0.0)
    rescaled_true = observed / mask.p
    return Observation(
        observed=observed,
        mask=mask,
        rescaled_true=rescaled_true,
        rescaled_est=observed / mask.p_hat,
        E=rescaled_true - gt.A,
    )


def noise_abs_moment(c: float, spec: NoiseSpec, p: float, l: int) -> float:
    """Exact ``E|c + Z/p|^l`` for the homogeneous noise laws."""
    K = spec.K_Z
    if spec.distribution == "zero" or K == 0:
        return abs(c) ** l
    if spec.distribution == "rademacher_scaled":
        return 0.5 * (abs(c + K / p) ** l + abs(c - K / p) ** l)
    # Z/p uniform on [-K/p, K/p]; integrate |t|^l over [c - K/p, c + K/p]
    lo, hi = c - K / p, c + K / p

    def prim(t):
        return math.copysign(abs(t) ** (l + 1) / (l + 1), t)

    return (prim(hi) - prim(lo)) / (2 * K / p)


def entry_moment_certificate(a_ij: float, p: float, K_A: float, spec: NoiseSpec, l_max: int = 8):
    """Exact moments of one perturbation entry against ``p^(1-l) K^l``.

    Returns a list of ``(l, exact_moment, bound)`` for ``l = 2 .. l_max``,
    where ``K = K_A + K_Z``. The bound holds for every ``|a_ij| <= K_A``.
    """
    K = K_A + spec.K_Z
    rows = []
    for l in range(2, l_max + 1):
        on = noise_abs_moment(a_ij * (1 / p - 1), spec, p, l)
        exact = p * on + (1 - p) * abs(a_ij) ** l
        rows.append((l, exact, p ** (1 - l) * K**l))
    return rows


def sample_entry_perturbation(
    a_ij: float, p: float, spec: NoiseSpec, size: int, seed: int
) -> np.ndarray:
    """Monte Carlo draws of ``E_ij`` for a single entry value ``a_ij``."""
    rng = rng_for(seed, STREAM_NOISE, 7)
    hit = rng.random(size) < p
    if spec.distribution == "uniform_bounded":
        z = rng.uniform(-spec.K_Z, spec.K_Z, size)
    elif spec.distribution == "rademacher_scaled":
        z = spec.K_Z * (2.0 * rng.integers(0, 2, size) - 1.0)
    else:
        z = np.zeros(size)
    return np.where(hit, (a_ij + z) / p, 0.0) - a_ij


# ---------------------------------------------------------------------------
# portable text matrix format

MATRIX_MAGIC = "# ar2lab-matrix v1"


def write_matrix(path, A, **header) -> None:
    """Write ``A`` as text: a magic line, ``# key=value`` header lines, then rows.

    ``rows`` and ``cols`` are always written; values use 17 significant
    digits so float64 round-trips exactly.
    """
    A = np.asarray(A, dtype=np.float64)
    lines = [MATRIX_MAGIC, f"# rows={A.shape[0]}", f"# cols={A.shape[1]}"]
    for key, val in header.items():
        if val is not None:
            lines.append(f"# {key}={val!r}" if isinstance(val, float) else f"# {key}={val}")
    body = "\n".join(" ".join(format(x, ".17g") for x in row) for row in A)
    Path(path).write_text("\n".join(lines) + "\n" + body + "\n")


def read_matrix(path) -> tuple[np.ndarray, dict[str, str]]:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MATRIX_MAGIC:
        raise ValidationError(f"{path}: not an ar2lab matrix file")
    header: dict[str, str] = {}
    i = 1
    while i < len(text) and text[i].startswith("#"):
        key, _, val = text[i][1:].strip().partition("=")
        header[key.strip()] = val.strip()
        i += 1
    try:
        rows, cols = int(header["rows"]), int(header["cols"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: missing rows/cols header") from exc
    body = [line for line in text[i:] if line.strip()]
    A = np.array([[float(x) for x in line.split()] for line in body], dtype=np.float64)
    if A.shape != (rows, cols):
        raise ValidationError(f"{path}: body shape {A.shape} != header ({rows}, {cols})")
    return A, header

