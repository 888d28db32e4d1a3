"""Integral coefficients of the resolvent expansion.

``C_nu(I)`` is the contour integral of ``z^nu * z^-(gamma+1) * prod_k lam_k / (z - lam_k)``
over circles that enclose the eigenvalues ``{+-sigma_i : i in S}``. It is
computed exactly by residues and, independently, by trapezoidal quadrature on
the circles. The module also enumerates the ``(alpha, beta)`` block patterns of
the expansion and reassembles a Taylor term by brute force from monomial
matrices.

Index conventions: a spectrum ``lam`` has length ``2r`` with
``lam[r + i] = -lam[i]``; index sequences ``I`` and subsets ``S`` are 1-based,
and index ``i`` belongs to ``S`` when ``i in S`` or ``i - r in S``.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContourError, DegenerateSpectrumError, QuadratureError, ValidationError
from .linalg_core import SymmetrizedSystem, build_symmetrized_system, symmetrize

DEFAULT_NODES = 2048
MAX_NODES = 2**18
STABILITY_RTOL = 1e-9


# ---------------------------------------------------------------------------
# contour geometry


@dataclass(frozen=True)
class Circle:
    center: float
    radius: float

    def contains(self, x: float) -> bool:
        return abs(x - self.center) < self.radius

    def distance(self, x: complex) -> float:
        return abs(abs(x - self.center) - self.radius)


@dataclass(frozen=True)
class ContourSpec:
    """Disjoint circles on the real axis; their union is the contour.

    ``around`` puts one circle on each maximal run of enclosed points, with
    both real-axis crossings at the midpoints of the neighbouring gaps. With
    ``split=True`` every enclosed point gets its own circle instead.
    """

    circles: tuple[Circle, ...]
    node_count: int = DEFAULT_NODES

    def __post_init__(self):
        if not self.circles:
            raise ContourError("a contour needs at least one circle")
        if self.node_count < 8 or self.node_count % 4:
            raise ValidationError("node_count must be a multiple of 4 and >= 8")
        for c in self.circles:
            if not c.radius > 0:
                raise ContourError(f"circle radius must be positive, got {c.radius}")

    def encloses(self, x: float) -> bool:
        return any(c.contains(x) for c in self.circles)

    def clearance(self, points: Iterable[float]) -> float:
        pts = list(points)
        if not pts:
            return math.inf
        return min(c.distance(x) for c in self.circles for x in pts)

    def validate(self, inside: Iterable[float], outside: Iterable[float], min_clearance: float = 0.0):
        inside, outside = list(inside), list(outside)
        for x in inside:
            if not self.encloses(x):
                raise ContourError(f"point {x:g} should be enclosed but is not")
        for x in outside:
            if self.encloses(x):
                raise ContourError(f"point {x:g} must lie outside the contour")
        clear = self.clearance(inside + outside)
        if clear <= 0 or clear < min_clearance:
            raise ContourError(f"clearance {clear:.3g} below the required {min_clearance:.3g}")
        return clear

    @classmethod
    def around(cls, inside: Iterable[float], outside: Iterable[float],
               node_count: int = DEFAULT_NODES, min_clearance: float | None = None,
               split: bool = False) -> "ContourSpec":
        inside = sorted(set(float(x) for x in inside))
        outside = sorted(set(float(x) for x in outside))
        if not inside:
            raise ContourError("nothing to enclose")
        if set(inside) & set(outside):
            raise ContourError("a point is both inside and outside")
        tagged = sorted([(x, True) for x in inside] + [(x, False) for x in outside])
        runs: list[tuple[float, float, float, float]] = []  # (left nbr, a, b, right nbr)
        i = 0
        while i < len(tagged):
            if not tagged[i][1]:
                i += 1
                continue
            j = i
            while not split and j + 1 < len(tagged) and tagged[j + 1][1]:
                j += 1
            left = tagged[i - 1][0] if i > 0 else -math.inf
            right = tagged[j + 1][0] if j + 1 < len(tagged) else math.inf
            runs.append((left, tagged[i][0], tagged[j][0], right))
            i = j + 1
        circles = []
        for left, a, b, right in runs:
            gl = (a - left) / 2 if math.isfinite(left) else math.inf
            gr = (right - b) / 2 if math.isfinite(right) else math.inf
            if not math.isfinite(gl) and not math.isfinite(gr):
                gl = gr = max(1.0, b - a)
            gl = gl if math.isfinite(gl) else gr
            gr = gr if math.isfinite(gr) else gl
            xl, xr = a - gl, b + gr
            circles.append(Circle(center=(xl + xr) / 2, radius=(xr - xl) / 2))
        spec = cls(circles=tuple(circles), node_count=node_count)
        spec.validate(inside, outside, min_clearance or 0.0)
        return spec


def _full_nodes(c: Circle, K: int):
    """Nodes and weights with ``sum w f(z) ~ (1/2 pi i) * integral f dz``."""
    theta = 2 * np.pi * np.arange(K) / K
    d = c.radius * np.exp(1j * theta)
    return c.center + d, d / K


def _half_nodes(c: Circle, K: int):
    """Upper-half nodes ``k = 0..K/2``; valid when ``f(conj z) = conj f(z)``.

    Taking the real part of ``sum w f(z)`` then gives the full K-node rule.
    """
    k = np.arange(K // 2 + 1)
    d = c.radius * np.exp(2j * np.pi * k / K)
    w = 2 * d / K
    w[0] /= 2
    w[-1] /= 2
    return c.center + d, w, k


# ---------------------------------------------------------------------------
# scalar quadrature


def contour_integral(f: Callable[[np.ndarray], np.ndarray], spec: ContourSpec,
                     rtol: float = STABILITY_RTOL, max_nodes: int = MAX_NODES) -> tuple[complex, float]:
    """``(1/2 pi i) * integral of f`` over the contour, with node doubling.

    Returns ``(value, scale)`` where ``scale`` is the largest magnitude of a
    single weighted sample, the natural unit of rounding error.
    """

    def rule(K):
        total, scale = 0j, 0.0
        for c in spec.circles:
            z, w = _full_nodes(c, K)
            terms = w * f(z) * K  # unscaled by 1/K for the magnitude estimate
            scale = max(scale, float(np.max(np.abs(terms))))
            total += complex(np.sum(terms)) / K
        return total, scale

    K = spec.node_count
    prev, scale = rule(K)
    while K <= max_nodes:
        K *= 2
        cur, scale = rule(K)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-4 * scale):
            return cur, scale
        prev = cur
    raise QuadratureError(f"quadrature did not stabilise by {max_nodes} nodes per circle")


# ---------------------------------------------------------------------------
# integral coefficients


def _check_spectrum(lam: Sequence) -> int:
    if len(lam) == 0 or len(lam) % 2:
        raise ValidationError("spectrum must have even length 2r")
    r = len(lam) // 2
    for i in range(r):
        if lam[r + i] != -lam[i]:
            raise ValidationError("spectrum must satisfy lam[r + i] = -lam[i]")
        if lam[i] == 0:
            raise DegenerateSpectrumError("zero eigenvalue in the signal spectrum")
    return r


def _in_S(i: int, S: frozenset, r: int) -> bool:
    return ((i - 1) % r) + 1 in S


def _normalize(I: Sequence[int], lam: Sequence, S: Iterable[int], nu: int, gamma: int):
    r = _check_spectrum(lam)
    S = frozenset(int(s) for s in S)
    if not S or min(S) < 1 or max(S) > r:
        raise ValidationError(f"S must be a non-empty subset of [1, {r}]")
    I = tuple(int(i) for i in I)
    if not I:
        raise ValidationError("index sequence I must be non-empty")
    if min(I) < 1 or max(I) > 2 * r:
        raise ValidationError(f"indices of I must lie in [1, {2 * r}]")
    if nu not in (0, 1):
        raise ValidationError("nu must be 0 or 1")
    if gamma + 1 < len(I):
        raise ValidationError("need gamma + 1 >= |I|")
    return I, S, r


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def _series_coeffs(d, e: int, order: int, exact: bool) -> list:
    """Taylor coefficients of ``(d + t)^(-e)`` up to ``t^order``."""
    one = Fraction(1) if exact else 1.0
    out, c = [], one / d**e
    for k in range(order + 1):
        out.append(c)
        # binom(-e, k+1) / binom(-e, k) = (-e - k) / (k + 1)
        c = c * (-e - k) / ((k + 1) * d)
    return out


def _convolve(a: list, b: list, order: int, exact: bool) -> list:
    out = []
    for k in range(order + 1):
        terms = [a[j] * b[k - j] for j in range(k + 1)]
        out.append(sum(terms, Fraction(0)) if exact else math.fsum(terms))
    return out


def integral_coefficient_residue(I: Sequence[int], lam: Sequence, S: Iterable[int], nu: int, gamma: int):
    """Exact ``C_nu(I)`` as a sum of residues at the enclosed poles.

    With rational (``int``/``Fraction``) spectra the result is an exact
    ``Fraction``; otherwise the same expansion runs in floating point with
    compensated summation.
    """
    I, S, r = _normalize(I, lam, S, nu, gamma)
    exact = all(_is_exact(x) for x in lam)
    vals = [lam[i - 1] for i in I]
    inside = Counter(lam[i - 1] for i in I if _in_S(i, S, r))
    outside = Counter(lam[i - 1] for i in I if not _in_S(i, S, r))
    n0 = gamma + 1 - nu
    if not inside:
        return Fraction(0) if exact else 0.0
    for a in inside:
        if a in outside:
            raise DegenerateSpectrumError(f"pole {a} appears both inside and outside the contour")
    poles = list(outside.items()) + [(0, n0)]
    total = []
    for a, q in inside.items():
        order = q - 1
        acc = [Fraction(1) if exact else 1.0] + [Fraction(0) if exact else 0.0] * order
        for c, e in poles + [(b, f) for b, f in inside.items() if b != a]:
            acc = _convolve(acc, _series_coeffs(a - c, e, order, exact), order, exact)
        total.append(acc[order])
    res = sum(total, Fraction(0)) if exact else math.fsum(total)
    prefactor = Fraction(1) if exact else 1.0
    for v in vals:
        prefactor *= v
    return prefactor * res


def _integrand(I, lam, nu, gamma):
    vals = np.array([float(lam[i - 1]) for i in I])

    def f(z):
        out = z ** (nu - gamma - 1)
        for v in vals:
            out = out * (v / (z - v))
        return out

    return f


def coefficient_contour(lam: Sequence, S: Iterable[int], node_count: int = DEFAULT_NODES) -> ContourSpec:
    """One circle per eigenvalue in ``{+-lam_i : i in S}``, the rest of ``lam`` and 0 outside.

    Separate circles keep the contour away from the high-order pole at 0,
    which would otherwise dominate the integrand and cost digits.
    """
    r = _check_spectrum(lam)
    S = frozenset(int(s) for s in S)
    lamf = [float(x) for x in lam]
    inside = [lamf[i - 1] for i in range(1, 2 * r + 1) if _in_S(i, S, r)]
    outside = [lamf[i - 1] for i in range(1, 2 * r + 1) if not _in_S(i, S, r)] + [0.0]
    return ContourSpec.around(inside, outside, node_count, split=True)


def integral_coefficient_quadrature(I: Sequence[int], lam: Sequence, S: Iterable[int], nu: int, gamma: int,
                                    contour: ContourSpec | None = None) -> float:
    """Trapezoidal-rule ``C_nu(I)``; the numerical oracle for the residue sum."""
    return _quadrature_with_scale(I, lam, S, nu, gamma, contour)[0]


def _quadrature_with_scale(I, lam, S, nu, gamma, contour=None):
    I, S, r = _normalize(I, lam, S, nu, gamma)
    if contour is None:
        contour = coefficient_contour(lam, S)
    else:
        lamf = [float(x) for x in lam]
        contour.validate(
            [lamf[i - 1] for i in range(1, 2 * r + 1) if _in_S(i, S, r)],
            [lamf[i - 1] for i in range(1, 2 * r + 1) if not _in_S(i, S, r)] + [0.0],
        )
    value, scale = contour_integral(_integrand(I, lam, nu, gamma), contour)
    poles = [float(lam[i - 1]) for i in I] + ([0.0] if gamma + 1 > nu else [])
    enclosed = any(contour.encloses(x) for x in poles)
    if enclosed and abs(value) < ILL_CONDITIONED * scale:
        # the integrand dwarfs the result; double precision cannot resolve it
        digits = 15 + int(math.ceil(math.log10(scale / max(abs(value), 1e-300 * scale))))
        value = _contour_integral_mp(I, lam, nu, gamma, contour, min(digits + 10, 80))
    if abs(value.imag) > 1e-9 * max(abs(value.real), 1e-4 * scale, 1e-300):
        raise QuadratureError(f"imaginary part {value.imag:.3g} is not negligible")
    return value.real, scale


ILL_CONDITIONED = 1e-6


def _contour_integral_mp(I, lam, nu, gamma, contour: ContourSpec, dps: int,
                         max_nodes: int = 2**14) -> complex:
    """The trapezoidal rule again, in ``dps``-digit arithmetic."""
    import mpmath

    with mpmath.workdps(dps):
        vals = [mpmath.mpf(Fraction(lam[i - 1]).numerator) / Fraction(lam[i - 1]).denominator
                for i in I]

        def rule(K):
            total, scale = mpmath.mpc(0), mpmath.mpf(0)
            for c in contour.circles:
                center, radius = mpmath.mpf(c.center), mpmath.mpf(c.radius)
                for k in range(K):
                    d = radius * mpmath.expjpi(mpmath.mpf(2 * k) / K)
                    f = (center + d) ** (nu - gamma - 1)
                    for v in vals:
                        f *= v / (center + d - v)
                    total += f * d
                    scale += abs(f * d)
            return total / K, scale / K

        tol = mpmath.mpf(10) ** (5 - dps)
        K = 128
        prev, _ = rule(K)
        while K < max_nodes:
            K *= 2
            cur, scale = rule(K)
            if abs(cur - prev) <= tol * max(abs(cur), scale):
                return complex(cur)
            prev = cur
    raise QuadratureError("extended-precision quadrature did not stabilise")


# ---------------------------------------------------------------------------
# coefficient bounds


def spectral_stats(lam: Sequence, S: Iterable[int]) -> tuple[float, float]:
    """``(lambda_S, Delta_S)`` of a symmetric spectrum; 0 counts as outside."""
    r = _check_spectrum(lam)
    S = frozenset(int(s) for s in S)
    lamf = [float(x) for x in lam]
    ins = [lamf[i - 1] for i in range(1, 2 * r + 1) if _in_S(i, S, r)]
    outs = [lamf[i - 1] for i in range(1, 2 * r + 1) if not _in_S(i, S, r)] + [0.0]
    return min(abs(x) for x in ins), min(abs(a - b) for a in ins for b in outs)


def _binom(n: int, k: int) -> int:
    return math.comb(n, k) if 0 <= k <= n else 0


def coefficient_bound(I: Sequence[int], lam: Sequence, S: Iterable[int], nu: int, gamma: int) -> float:
    """Right-hand side of the uniform coefficient bound (``L_0 = 2``, ``L_1 = lambda_s``).

    For ``nu = 1`` the set ``S`` must be a prefix ``[s]``.
    """
    I, S, r = _normalize(I, lam, S, nu, gamma)
    if nu == 1 and S != frozenset(range(1, max(S) + 1)):
        raise ValidationError("the nu = 1 bound needs S = [s]")
    lam_S, Delta_S = spectral_stats(lam, S)
    beta = len(I)
    beta_S = sum(_in_S(i, S, r) for i in I)
    L = 2.0 if nu == 0 else lam_S
    return (L * (1 + Delta_S / lam_S) ** (beta - beta_S) * _binom(gamma + beta_S - 2, beta_S - 1)
            / (lam_S ** (gamma + 1 - beta) * Delta_S ** (beta - 1)))


def coefficient_bound_local(I: Sequence[int], lam: Sequence, S: Iterable[int], gamma: int) -> float:
    """The per-sequence (pre-absorption) ``nu = 0`` bound.

    ``lambda_S(I)`` and ``Delta_S(I)`` only look at poles present in ``I``;
    the pole of ``z^-(gamma+1)`` at 0 counts as an outside pole.
    """
    I, S, r = _normalize(I, lam, S, 0, gamma)
    ins = [float(lam[i - 1]) for i in I if _in_S(i, S, r)]
    if not ins:
        return 0.0
    outs = [float(lam[i - 1]) for i in I if not _in_S(i, S, r)] + [0.0]
    lam_I = min(abs(x) for x in ins)
    Delta_I = min(abs(a - b) for a in ins for b in outs)
    beta, beta_S = len(I), len(ins)
    return (2.0 * (1 + Delta_I / lam_I) ** (beta - beta_S) * _binom(gamma + beta_S - 2, beta_S - 1)
            / (lam_I ** (gamma + 1 - beta) * Delta_I ** (beta - 1)))


@dataclass(frozen=True)
class CoefficientSample:
    sample: int
    r: int
    gamma: int
    nu: int
    S: tuple[int, ...]
    I: tuple[int, ...]
    residue: float
    quadrature: float
    abs_err: float
    agree: bool
    bound: float
    bound_ok: bool
    bound_local: float
    bound_local_ok: bool

    def as_row(self) -> dict:
        row = dict(self.__dict__)
        row["S"] = " ".join(map(str, self.S))
        row["I"] = " ".join(map(str, self.I))
        return row


AGREE_RTOL = 1e-8


def _agree(res: float, quad: float, scale: float) -> bool:
    # a vanishing coefficient has no relative error; compare it at rounding level
    if res == 0:
        return abs(quad) <= AGREE_RTOL * 1e-6 * scale
    return abs(res - quad) <= AGREE_RTOL * abs(res)


def verify_coefficient_bounds(samples: int, gamma_max: int, r: int, seed: int,
                              beta_max: int = 4) -> list[CoefficientSample]:
    """Random rational spectra and sequences; residue vs quadrature and the bounds.

    Spectra are distinct integers in ``[1, 10 r]``. Every fifth sample is a
    prefix case with ``beta = min(gamma + 1, beta_max)`` and all indices in S.
    """
    from .problem_gen import rng_for

    if samples < 1 or gamma_max < 1 or r < 1 or beta_max < 1:
        raise ValidationError("samples, gamma_max, r and beta_max must be positive")
    rows = []
    for t in range(samples):
        rng = rng_for(seed, 11, t)
        sig = sorted(rng.choice(np.arange(1, 10 * r + 1), size=r, replace=False).tolist(), reverse=True)
        lam = [Fraction(int(x)) for x in sig] + [Fraction(-int(x)) for x in sig]
        gamma = int(rng.integers(1, gamma_max + 1))
        nu = int(rng.integers(0, 2))
        targeted = t % 5 == 4
        if nu == 1 or targeted:
            s = int(rng.integers(1, r + 1))
            S = tuple(range(1, s + 1))
        else:
            k = int(rng.integers(1, r + 1))
            S = tuple(sorted(rng.choice(np.arange(1, r + 1), size=k, replace=False).tolist()))
        beta_hi = min(gamma + 1, beta_max)
        if targeted:
            beta = beta_hi
            pool = [i for i in range(1, 2 * r + 1) if _in_S(i, frozenset(S), r)]
        else:
            beta = int(rng.integers(1, beta_hi + 1))
            pool = list(range(1, 2 * r + 1))
        I = tuple(int(x) for x in rng.choice(pool, size=beta, replace=True))
        res = float(integral_coefficient_residue(I, lam, S, nu, gamma))
        quad, scale = _quadrature_with_scale(I, lam, S, nu, gamma)
        bnd = coefficient_bound(I, lam, S, nu, gamma)
        loc = coefficient_bound_local(I, lam, S, gamma) if nu == 0 else math.nan
        slack = 1 + 1e-12
        rows.append(CoefficientSample(
            sample=t, r=r, gamma=gamma, nu=nu, S=S, I=I,
            residue=res, quadrature=quad, abs_err=abs(res - quad), agree=_agree(res, quad, scale),
            bound=bnd, bound_ok=abs(res) <= bnd * slack,
            bound_local=loc, bound_local_ok=True if nu == 1 else abs(res) <= loc * slack,
        ))
    return rows


# ---------------------------------------------------------------------------
# partitions and brute-force expansion


def _compositions(total: int, parts: int, minimum: int):
    """All tuples of ``parts`` integers >= minimum summing to ``total``."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(minimum, total - minimum * (parts - 1) + 1):
        for rest in _compositions(total - first, parts - 1, minimum):
            yield (first,) + rest


def enumerate_partitions(gamma: int, h: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All ``(alpha, beta)`` with ``len(alpha) = h + 1``, ``len(beta) = h``.

    The end entries of alpha are >= 0, the inner ones >= 1, every beta_k >= 1
    and ``sum(alpha) + sum(beta) = gamma + 1``. Returns [] when h is outside
    ``[1, gamma // 2 + 1]``.
    """
    if gamma < 1 or h < 1 or h > gamma // 2 + 1:
        return []
    out = []
    for beta_total in range(h, gamma + 2):
        alpha_total = gamma + 1 - beta_total
        for beta in _compositions(beta_total, h, 1):
            # shift the inner alphas down by one so all parts are >= 0
            for free in _compositions(alpha_total - (h - 1), h + 1, 0):
                alpha = (free[0],) + tuple(x + 1 for x in free[1:-1]) + (free[-1],)
                out.append((alpha, beta))
    return out


def partition_count(gamma: int, h: int) -> int:
    """Closed form ``sum_beta binom(beta - 1, h - 1) * binom(gamma + 2 - beta, h)``."""
    if gamma < 1 or h < 1 or h > gamma // 2 + 1:
        return 0
    return sum(_binom(b - 1, h - 1) * _binom(gamma + 2 - b, h) for b in range(h, gamma + 2))


# ---------------------------------------------------------------------------
# Taylor terms of the resolvent difference by quadrature


def _full_basis(system: SymmetrizedSystem) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal eigenbasis of sym(A): W followed by a kernel basis."""
    import scipy.linalg

    perp = scipy.linalg.null_space(system.W.T)
    B = np.hstack([system.W, perp])
    lam = np.concatenate([system.lam, np.zeros(perp.shape[1])])
    return B, lam


@dataclass(frozen=True)
class SeriesTerms:
    terms: list  # T^(gamma) for gamma = 1..gamma_max, as dense arrays
    nodes_used: int


def resolvent_series_terms(system: SymmetrizedSystem, E: np.ndarray, contour: ContourSpec, nu: int,
                           gamma_max: int, rtol: float = STABILITY_RTOL,
                           max_nodes: int = 2**15) -> SeriesTerms:
    """``T^(gamma) = (1/2 pi i) * integral z^nu [R(z) sym(E)]^gamma R(z) dz``.

    ``R(z)`` is the resolvent of sym(A) written in its eigenbasis. Each term
    is checked against the rule with half the nodes; on disagreement beyond
    ``rtol`` (relative to the term, or to ``1e-3 * |T^(1)|`` once terms get
    small) the node count doubles.
    """
    if nu not in (0, 1):
        raise ValidationError("nu must be 0 or 1")
    if gamma_max < 1:
        raise ValidationError("gamma_max must be >= 1")
    B, lam = _full_basis(system)
    F = B.T @ symmetrize(E) @ B
    K = contour.node_count
    while K <= max_nodes:
        fine = [np.zeros(F.shape, dtype=complex) for _ in range(gamma_max)]
        coarse = [np.zeros(F.shape, dtype=complex) for _ in range(gamma_max)]
        for c in contour.circles:
            z, w, k = _half_nodes(c, K)
            even = k % 2 == 0
            wz = w * z**nu
            D = 1.0 / (z[:, None] - lam[None, :])
            X = D[:, :, None] * F[None, :, :] * D[:, None, :]
            for g in range(gamma_max):
                fine[g] += np.tensordot(wz, X, axes=1)
                # the K/2 rule uses the even nodes, every weight doubled
                coarse[g] += 2 * np.tensordot(wz[even], X[even], axes=1)
                if g + 1 < gamma_max:
                    X = D[:, :, None] * np.matmul(F, X)
        fine_r = [t.real for t in fine]
        coarse_r = [t.real for t in coarse]
        first = np.linalg.norm(fine_r[0])
        ok = all(
            np.linalg.norm(a - b) <= rtol * max(np.linalg.norm(a), 1e-3 * first, 1e-300)
            for a, b in zip(fine_r, coarse_r)
        )
        if ok:
            return SeriesTerms(terms=[B @ t @ B.T for t in fine_r], nodes_used=K)
        K *= 2
    raise ContourError(f"series quadrature unstable up to {max_nodes} nodes per circle")


def monomial_matrix(system: SymmetrizedSystem, symE: np.ndarray, seq: Sequence[int]) -> np.ndarray:
    """``P_{i1} symE P_{i2} ... symE P_{ik}`` for a 1-based index sequence."""
    W = system.W
    first, last = W[:, seq[0] - 1], W[:, seq[-1] - 1]
    scalar = 1.0
    for a, b in zip(seq[:-1], seq[1:]):
        scalar *= W[:, a - 1] @ symE @ W[:, b - 1]
    return scalar * np.outer(first, last)


def brute_force_term(system: SymmetrizedSystem, E: np.ndarray, S: Iterable[int], nu: int, gamma: int) -> np.ndarray:
    """``T_nu^(gamma)`` summed over every block pattern and index sequence."""
    r = system.r
    if r > 2 or gamma > 4:
        raise ValidationError("brute-force expansion is limited to r <= 2 and gamma <= 4")
    S = tuple(sorted(set(int(s) for s in S)))
    symE = symmetrize(E)
    lam = [float(x) for x in system.lam]
    powers = [np.linalg.matrix_power(symE, k) for k in range(gamma + 2)]
    total = np.zeros_like(symE)
    for h in range(1, gamma // 2 + 2):
        for alpha, beta in enumerate_partitions(gamma, h):
            for I in itertools.product(range(1, 2 * r + 1), repeat=sum(beta)):
                coef = integral_coefficient_residue(I, lam, S, nu, gamma)
                if coef == 0:
                    continue
                blocks, pos = [], 0
                for b in beta:
                    blocks.append(I[pos:pos + b])
                    pos += b
                mat = powers[alpha[0]]
                for k, blk in enumerate(blocks):
                    mat = mat @ monomial_matrix(system, symE, blk)
                    mat = mat @ (powers[alpha[k + 1] + 1] if k + 1 < h else powers[alpha[h]])
                total += coef * mat
    return total


def series_contour(system: SymmetrizedSystem, S: Iterable[int], extra_inside=(), extra_outside=(),
                   node_count: int = DEFAULT_NODES, min_clearance: float | None = None) -> ContourSpec:
    """Circles around ``+-sigma_i`` (i in S) of a symmetrized system, 0 outside."""
    lam = list(system.lam)
    r = system.r
    S = frozenset(int(s) for s in S)
    inside = [lam[i - 1] for i in range(1, 2 * r + 1) if _in_S(i, S, r)] + list(extra_inside)
    outside = [lam[i - 1] for i in range(1, 2 * r + 1) if not _in_S(i, S, r)] + [0.0] + list(extra_outside)
    return ContourSpec.around(inside, outside, node_count, min_clearance=min_clearance)


def expansion_consistency_check(gt, E, S: Iterable[int], nu: int, gamma: int) -> float:
    """Relative Frobenius gap between brute-force and quadrature ``T^(gamma)``."""
    E = np.asarray(E, dtype=np.float64)
    system = build_symmetrized_system(gt.factors, gt.r)
    direct = resolvent_series_terms(system, E, series_contour(system, S), nu, gamma).terms[gamma - 1]
    brute = brute_force_term(system, E, S, nu, gamma)
    ref = np.linalg.norm(direct)
    diff = np.linalg.norm(brute - direct)
    return float(diff / ref) if ref > 0 else float(diff)
