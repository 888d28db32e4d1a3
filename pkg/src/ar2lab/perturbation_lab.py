"""Perturbation statistics, bound right-hand sides and Monte Carlo checks.

Universal constants in every bound are set to 1; callers compare the
empirical quantity with the returned value and record the ratio. ``log`` is
the natural logarithm and ``N = m + n`` throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .contour_calc import ContourSpec, resolvent_series_terms
from .errors import DegenerateSpectrumError, HypothesisError, ValidationError
from .linalg_core import (
    SvdFactors,
    as_matrix,
    build_symmetrized_system,
    norm,
    svd,
    symmetrize,
)
from .problem_gen import GroundTruth, _normalize_subset, rng_for

HYPOTHESIS_LEVEL = 1 / 8
RANDOM_HYPOTHESIS_LEVEL = 1 / 16


def _check_E(gt: GroundTruth, E) -> np.ndarray:
    E = as_matrix(E, "E")
    if E.shape != gt.A.shape:
        raise ValidationError(f"E has shape {E.shape}, expected {gt.A.shape}")
    return E


GAP_RESOLUTION = 1e-12


def _spectral_S(gt: GroundTruth, S) -> tuple[tuple[int, ...], float, float]:
    S = _normalize_subset(S, gt.r)
    sigma_S, Delta_S = gt.sigma_S(S), gt.Delta_S(S)
    # gaps at roundoff level are indistinguishable from ties
    if sigma_S <= 0 or Delta_S <= GAP_RESOLUTION * gt.sigma[0]:
        raise DegenerateSpectrumError(f"sigma_S={sigma_S:g}, Delta_S={Delta_S:g} for S={S}")
    return S, sigma_S, Delta_S


def _is_prefix(S: tuple[int, ...]) -> bool:
    return S == tuple(range(1, len(S) + 1))


def _row_max(X: np.ndarray) -> float:
    return float(np.max(np.sqrt(np.sum(X * X, axis=1))))


def tau_deterministic(E: np.ndarray, U: np.ndarray, V: np.ndarray, a_max: int) -> float:
    """``max_a r^{-1/2} max(|(EE^T)^a U|_{2,inf} / H^{2a}, |(EE^T)^a E V|_{2,inf} / H^{2a+1})``.

    ``H = ||E||``. Call with ``(E.T, V, U)`` for the other side. The powers
    are applied to the thin factors one step at a time, dividing by ``H^2``
    each step so nothing overflows.
    """
    r = U.shape[1]
    H = norm(E, "operator")
    if H == 0:
        return _row_max(U) / math.sqrt(r)
    X, Y = U.copy(), E @ V / H
    best = max(_row_max(X), _row_max(Y))
    for _ in range(a_max):
        X = E @ (E.T @ X) / H**2
        Y = E @ (E.T @ Y) / H**2
        best = max(best, _row_max(X), _row_max(Y))
    return best / math.sqrt(r)


def cross_statistic(E: np.ndarray, U: np.ndarray, V: np.ndarray) -> float:
    """``y = (1/2) max_{i != j} (|u_i^T E E^T u_j| + |v_i^T E^T E v_j|)``; 0 when r = 1."""
    r = U.shape[1]
    if r < 2:
        return 0.0
    EtU, EV = E.T @ U, E @ V
    G = np.abs(EtU.T @ EtU) + np.abs(EV.T @ EV)
    np.fill_diagonal(G, -np.inf)
    return 0.5 * float(np.max(G))


# ---------------------------------------------------------------------------
# the report


@dataclass(frozen=True)
class PerturbationReport:
    S: tuple[int, ...]
    m: int
    n: int
    r: int
    E_op: float
    UEV_inf: float
    y: float
    tau1_det: float
    tau2_det: float
    tau1_rand: float
    tau2_rand: float
    R1: float
    R2: float
    R3: float
    R_S: float
    hypothesis_ok: bool
    sigma_S: float
    Delta_S: float
    a_max: int

    def as_dict(self) -> dict:
        d = asdict(self)
        d["S"] = list(self.S)
        return d


def perturbation_report(gt: GroundTruth, E, S: Iterable[int], varsigma: float | None = None,
                        M: float | None = None) -> PerturbationReport:
    """Every scalar of the deterministic perturbation bounds for ``A + E``.

    The random-model fields (``tau*_rand``, ``R_S``) need ``varsigma`` and
    ``M``; without them they are NaN.
    """
    E = _check_E(gt, E)
    S, sigma_S, Delta_S = _spectral_S(gt, S)
    m, n = gt.shape
    r = gt.r
    U, V = gt.U, gt.V
    a_max = int(math.floor(10 * math.log(m + n)))

    E_op = norm(E, "operator")
    UEV = U.T @ E @ V
    UEV_inf = float(np.max(np.abs(UEV)))
    y = cross_statistic(E, U, V)

    R1 = max(E_op / sigma_S, 2 * r * UEV_inf / Delta_S)
    R2 = math.sqrt(2 * r) * E_op / math.sqrt(sigma_S * Delta_S)
    system = build_symmetrized_system(gt.factors, r)
    symE = symmetrize(E)
    G = system.W.T @ symE @ (symE @ system.W)
    idx = np.arange(2 * r)
    gap = np.abs(idx[:, None] - idx[None, :])
    R3 = 2 * r / (sigma_S * Delta_S) * float(np.max(np.abs(G[(gap != 0) & (gap != r)]), initial=0.0))

    if varsigma is not None and M is not None:
        rq = random_dk_quantities(gt, varsigma, M, S)
        tau1_rand, tau2_rand, R_S = rq.tau1, rq.tau2, rq.R_S
    else:
        tau1_rand = tau2_rand = R_S = float("nan")

    return PerturbationReport(
        S=S,
        m=m,
        n=n,
        r=r,
        E_op=E_op,
        UEV_inf=UEV_inf,
        y=y,
        tau1_det=tau_deterministic(E, U, V, a_max),
        tau2_det=tau_deterministic(E.T, V, U, a_max),
        tau1_rand=tau1_rand,
        tau2_rand=tau2_rand,
        R1=R1,
        R2=R2,
        R3=R3,
        R_S=R_S,
        hypothesis_ok=max(R1, R2) <= HYPOTHESIS_LEVEL,
        sigma_S=sigma_S,
        Delta_S=Delta_S,
        a_max=a_max,
    )


# ---------------------------------------------------------------------------
# empirical differences


@dataclass(frozen=True)
class SubspaceDiff:
    S: tuple[int, ...]
    proj_diff_U: np.ndarray
    proj_diff_V: np.ndarray
    norms_U: dict
    norms_V: dict
    approx_diff: np.ndarray | None
    approx_diff_inf: float
    weyl_separated: bool

    def summary(self) -> dict:
        out = {"S": list(self.S), "weyl_separated": self.weyl_separated,
               "approx_diff_inf": self.approx_diff_inf}
        out.update({f"U_{k}": v for k, v in self.norms_U.items()})
        out.update({f"V_{k}": v for k, v in self.norms_V.items()})
        return out


def _perturbed_factors(gt: GroundTruth, E: np.ndarray, S: tuple[int, ...]) -> SvdFactors:
    ft = svd(gt.A + E)
    s_t = ft.sigma
    inside = [s_t[i - 1] for i in S]
    outside = [s_t[j] for j in range(s_t.shape[0]) if j + 1 not in S]
    tiny = 1e-12 * max(float(s_t[0]), 1e-300)
    if outside and min(abs(a - b) for a in inside for b in outside) <= tiny:
        raise DegenerateSpectrumError(f"perturbed singular values of S={S} collide with the rest")
    return ft


def _three_norms(X: np.ndarray) -> dict:
    return {k: norm(X, k) for k in ("operator", "infinity", "two_to_infinity")}


def subspace_diff(gt: GroundTruth, E, S: Iterable[int]) -> SubspaceDiff:
    """Projector differences for the singular subspaces indexed by ``S``.

    Singular vectors of ``A`` and ``A + E`` are paired by index. A gap
    ``Delta_S <= 2 ||E||`` only warns, since the pairing can still be right.
    """
    E = _check_E(gt, E)
    S, _, Delta_S = _spectral_S(gt, S)
    E_op = norm(E, "operator")
    separated = Delta_S > 2 * E_op
    if not separated:
        warnings.warn(f"Delta_S={Delta_S:g} <= 2||E||={2 * E_op:g}; subspace pairing may be ambiguous",
                      RuntimeWarning, stacklevel=2)
    ft = _perturbed_factors(gt, E, S)
    cols = [i - 1 for i in S]
    U, V, Ut, Vt = gt.U[:, cols], gt.V[:, cols], ft.U[:, cols], ft.V[:, cols]
    dU = Ut @ Ut.T - U @ U.T
    dV = Vt @ Vt.T - V @ V.T
    approx, approx_inf = None, float("nan")
    if _is_prefix(S):
        s = len(S)
        approx = ft.reconstruct(s) - gt.A_s(s)
        approx_inf = norm(approx, "infinity")
    return SubspaceDiff(
        S=S,
        proj_diff_U=dU,
        proj_diff_V=dV,
        norms_U=_three_norms(dU),
        norms_V=_three_norms(dV),
        approx_diff=approx,
        approx_diff_inf=approx_inf,
        weyl_separated=separated,
    )


# ---------------------------------------------------------------------------
# bound right-hand sides


@dataclass(frozen=True)
class MatcomBound:
    value: float
    summands: tuple[float, float, float]
    gap_ok: bool
    density_ok: bool


def dk_matcom_bound(gt: GroundTruth, p: float, K: float, mu0: float, s: int) -> MatcomBound:
    """Entrywise bound on ``A_hat_s - A_s`` for a completion problem, unit constant.

    ``value = prefactor * r * sigma_s * (t1 + t2 + t3)`` with the three
    summands returned in ``summands``; the flags record the gap and density
    conditions.
    """
    if not 0 < p <= 1:
        raise ValidationError("p must lie in (0, 1]")
    if K <= 0 or mu0 <= 0:
        raise ValidationError("K and mu0 must be positive")
    if not 1 <= s <= gt.r:
        raise ValidationError(f"s={s} outside [1, {gt.r}]")
    m, n = gt.shape
    r = gt.r
    N = m + n
    L = math.log(N)
    sigma_s = float(gt.sigma[s - 1])
    delta_s = float(gt.delta[s - 1])
    if delta_s <= 0:
        raise DegenerateSpectrumError(f"delta_{s} = 0")
    t1 = K / sigma_s * math.sqrt(N / p)
    t2 = r * K * math.sqrt(L) / (delta_s * math.sqrt(p))
    t3 = r**2 * mu0 * K * L / (p * delta_s * math.sqrt(m * n))
    pre = (L + mu0) * L**2 / math.sqrt(m * n)
    return MatcomBound(
        value=pre * r * sigma_s * (t1 + t2 + t3),
        summands=(t1, t2, t3),
        gap_ok=delta_s >= 40 * r * K * math.sqrt(N / p),
        density_ok=p >= (1 / m + 1 / n) * L,
    )


@dataclass(frozen=True)
class DeterministicBounds:
    entry_tau1: float
    entry_tau2: float
    row_tau1: float
    row_tau2: float
    approx: float
    core: float
    hypothesis_ok: bool


def deterministic_dk_bounds(report: PerturbationReport, gt: GroundTruth, S: Iterable[int]) -> DeterministicBounds:
    """Unit-constant bounds for singular-vector entries, rows and the rank-s approximant.

    Both tau pairings are returned: ``*_tau1`` uses the U side and
    ``*_tau2`` the V side. ``approx`` is NaN unless ``S = [s]``. Values are
    returned even when the hypothesis fails.
    """
    S = _normalize_subset(S, gt.r)
    if S != report.S:
        raise ValidationError(f"report was computed for S={report.S}, not {S}")
    r = report.r
    sig, Dl = report.sigma_S, report.Delta_S
    core = r * (report.E_op / sig + 2 * r * report.UEV_inf / Dl + 2 * r * report.y / (Dl * sig))
    t1, t2 = report.tau1_det, report.tau2_det
    approx = t1 * t2 * float(gt.sigma[len(S) - 1]) * core if _is_prefix(S) else float("nan")
    return DeterministicBounds(
        entry_tau1=t1**2 * core,
        entry_tau2=t2**2 * core,
        row_tau1=t1 * core,
        row_tau2=t2 * core,
        approx=approx,
        core=core,
        hypothesis_ok=report.hypothesis_ok,
    )


@dataclass(frozen=True)
class RandomQuantities:
    tau1: float
    tau2: float
    R_S: float
    R_terms: tuple[float, float, float]
    hypothesis_ok: bool


def random_dk_quantities(gt: GroundTruth, varsigma: float, M: float, S: Iterable[int]) -> RandomQuantities:
    """Closed-form tau pair and ``R_S`` for an entrywise-independent noise model.

    For matrix completion substitute ``varsigma = K / sqrt(p)`` and
    ``M = 1 / sqrt(p)``.
    """
    if varsigma <= 0 or M <= 0:
        raise ValidationError("varsigma and M must be positive")
    S, sigma_S, Delta_S = _spectral_S(gt, S)
    m, n = gt.shape
    r = gt.r
    N = m + n
    L = math.log(N)
    U, V = gt.U, gt.V
    U2, V2 = _row_max(U), _row_max(V)
    Uinf, Vinf = float(np.max(np.abs(U))), float(np.max(np.abs(V)))
    tail = L**1.5 / math.sqrt(N)
    tau1 = U2 * L / math.sqrt(r) + M * V2 * L**3 / math.sqrt(r * N) + tail
    tau2 = V2 * L / math.sqrt(r) + M * U2 * L**3 / math.sqrt(r * N) + tail
    a = varsigma * math.sqrt(N) / sigma_S
    b = r * varsigma * (math.sqrt(L) + M * Uinf * Vinf * L) / Delta_S
    c = 2 * r * varsigma**2 * N / (Delta_S * sigma_S)
    hyp = max(a, b, varsigma * math.sqrt(r * N) / math.sqrt(Delta_S * sigma_S)) <= RANDOM_HYPOTHESIS_LEVEL
    hyp = hyp and M <= math.sqrt(N) * L**-5
    return RandomQuantities(tau1=tau1, tau2=tau2, R_S=a + b + c, R_terms=(a, b, c), hypothesis_ok=hyp)


# ---------------------------------------------------------------------------
# resolvent series


@dataclass(frozen=True)
class SeriesCheck:
    contour: ContourSpec
    gamma_max: int
    nu: int
    term_norms: list[float]
    partial_sum_errors: list[float]
    relative_errors: list[float]
    decay_ratios: list[float]
    exact_norm: float
    nodes_used: int
    hypothesis_ok: bool
    terms: list[np.ndarray] = field(repr=False, default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for g in range(self.gamma_max):
            out.append({
                "gamma": g + 1,
                "term_norm": self.term_norms[g],
                "residual": self.partial_sum_errors[g],
                "relative_residual": self.relative_errors[g],
                "decay_ratio": self.decay_ratios[g - 1] if g > 0 else float("nan"),
            })
        return out


def _exact_series_target(gt: GroundTruth, ft: SvdFactors, S: tuple[int, ...], nu: int) -> np.ndarray:
    m, n = gt.shape
    cols = [i - 1 for i in S]
    U, V, Ut, Vt = gt.U[:, cols], gt.V[:, cols], ft.U[:, cols], ft.V[:, cols]
    if nu == 0:
        out = np.zeros((m + n, m + n))
        out[:m, :m] = Ut @ Ut.T - U @ U.T
        out[m:, m:] = Vt @ Vt.T - V @ V.T
        return out
    diff = (Ut * ft.sigma[cols]) @ Vt.T - (U * gt.sigma[cols]) @ V.T
    return symmetrize(diff)


def resolvent_series_check(gt: GroundTruth, E, S: Iterable[int], nu: int, gamma_max: int = 40,
                           contour: ContourSpec | None = None) -> SeriesCheck:
    """Partial sums of the resolvent expansion against the exact difference.

    The target is the symmetrized projector difference for ``nu = 0`` and
    ``sym(A~_S - A_S)`` for ``nu = 1``. The default contour encloses the
    original and perturbed ``+-sigma_i`` (i in S) and keeps every other
    eigenvalue of both dilations, and 0, at least ``Delta_S / 4`` away.
    """
    if nu not in (0, 1):
        raise ValidationError("nu must be 0 or 1")
    E = _check_E(gt, E)
    report = perturbation_report(gt, E, S)
    S = report.S
    system = build_symmetrized_system(gt.factors, gt.r)
    ft = _perturbed_factors(gt, E, S)
    lam = list(system.lam)
    r = gt.r
    inside = [x for i in S for x in (lam[i - 1], lam[r + i - 1], ft.sigma[i - 1], -ft.sigma[i - 1])]
    outside = [x for j in range(1, r + 1) if j not in S for x in (lam[j - 1], lam[r + j - 1])]
    outside += [x for j in range(ft.k) if j + 1 not in S for x in (ft.sigma[j], -ft.sigma[j])]
    outside.append(0.0)
    if contour is None:
        contour = ContourSpec.around(inside, outside, min_clearance=report.Delta_S / 4)
    else:
        contour.validate(inside, outside)

    series = resolvent_series_terms(system, E, contour, nu, gamma_max)
    target = _exact_series_target(gt, ft, S, nu)
    exact_norm = float(np.linalg.norm(target))
    partial = np.zeros_like(target)
    term_norms, errs, rel = [], [], []
    for T in series.terms:
        partial += T
        term_norms.append(float(np.linalg.norm(T)))
        err = float(np.linalg.norm(partial - target))
        errs.append(err)
        rel.append(err / exact_norm if exact_norm > 0 else err)
    ratios = [b / a if a > 0 else float("nan") for a, b in zip(term_norms[:-1], term_norms[1:])]
    return SeriesCheck(
        contour=contour,
        gamma_max=gamma_max,
        nu=nu,
        term_norms=term_norms,
        partial_sum_errors=errs,
        relative_errors=rel,
        decay_ratios=ratios,
        exact_norm=exact_norm,
        nodes_used=series.nodes_used,
        hypothesis_ok=report.hypothesis_ok,
        terms=series.terms,
    )


# ---------------------------------------------------------------------------
# Monte Carlo checks of the noise bounds


def sparse_sign_matrix(m: int, n: int, M: float, rng: np.random.Generator, varsigma: float = 1.0) -> np.ndarray:
    """Entries ``+-M varsigma`` with probability ``1 / (2 M^2)`` each, else 0.

    Mean 0, variance ``varsigma^2`` and ``E|x|^l = M^{l-2} varsigma^l``. M = 1
    gives Rademacher signs.
    """
    if M < 1:
        raise ValidationError("M must be >= 1 for the sparse sign model")
    q = 1.0 / M**2
    u = rng.random((m, n))
    signs = np.where(u < q / 2, 1.0, np.where(u < q, -1.0, 0.0))
    return signs * (M * varsigma)


def _random_orthonormal(rows: int, r: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((rows, r)))
    return Q * np.sign(np.diag(R))


def semi_iso_even_rhs(D: float, p: float, V_2inf: float, m: int, n: int, a: int) -> float:
    return D * p * V_2inf * (2 * (m + n)) ** a


def semi_iso_odd_rhs(D: float, p: float, U_2inf: float, r: int, M: float, m: int, n: int, a: int) -> float:
    k = 2 * a + 1
    inner = 16 * p**1.5 * k**1.5 * M * U_2inf / math.sqrt(r) + 1
    return D * math.sqrt(r) * p**1.5 * math.sqrt(k) * inner * (2 * (m + n)) ** a


def semi_iso_hypothesis(m: int, n: int, M: float, p: float, power: int) -> bool:
    """``m + n >= 2^8 M^2 p^6 power^4``, with power 2a (even) or 2a + 1 (odd)."""
    return m + n >= 2**8 * M**2 * p**6 * power**4


@dataclass(frozen=True)
class SemiIsoRow:
    case: str
    a: int
    D: float
    trials: int
    failures: int
    frequency: float
    tail: float
    hypothesis: bool
    max_ratio: float

    @property
    def within(self) -> bool:
        return self.frequency <= 2 * self.tail

    def as_dict(self) -> dict:
        d = asdict(self)
        d["within"] = self.within
        return d


def semi_isotropic_check(m: int, n: int, M_param: float, a_max: int, p_moment: int, trials: int, seed: int,
                         D_even: float = 2**10, D_odd: float = 2**10, r: int = 3, k: int = 1,
                         allow_outside_hypothesis: bool = False) -> list[SemiIsoRow]:
    """Failure frequencies of the even and odd semi-isotropic row bounds.

    Per trial: a fresh sparse sign matrix E (unit variance) and fresh random
    orthonormal U (m x r), V (n x r). Row ``k`` (1-based) of
    ``(E^T E)^a V`` and of ``(E^T E)^a E^T U`` is compared with its bound
    for every ``a <= a_max``. Pairs ``(a, p_moment)`` outside the
    size condition raise :class:`HypothesisError` unless
    ``allow_outside_hypothesis`` is set; the flag is then recorded per row.
    """
    if min(m, n, trials, r, p_moment) < 1 or a_max < 0:
        raise ValidationError("m, n, trials, r and p_moment must be positive; a_max >= 0")
    if not 1 <= k <= n:
        raise ValidationError(f"row index k={k} outside [1, {n}]")
    if r > min(m, n):
        raise ValidationError("r exceeds min(m, n)")
    hyp_even = [semi_iso_hypothesis(m, n, M_param, p_moment, 2 * a) for a in range(a_max + 1)]
    hyp_odd = [semi_iso_hypothesis(m, n, M_param, p_moment, 2 * a + 1) for a in range(a_max + 1)]
    if not allow_outside_hypothesis and not all(hyp_even + hyp_odd):
        bad = [a for a in range(a_max + 1) if not (hyp_even[a] and hyp_odd[a])]
        raise HypothesisError(
            f"m + n = {m + n} < 2^8 M^2 p^6 (2a+1)^4 for a in {bad}; "
            "pass allow_outside_hypothesis to run anyway"
        )
    fail_even = np.zeros(a_max + 1, dtype=int)
    fail_odd = np.zeros(a_max + 1, dtype=int)
    ratio_even = np.zeros(a_max + 1)
    ratio_odd = np.zeros(a_max + 1)
    row = k - 1
    for t in range(trials):
        rng = rng_for(seed, 21, t)
        E = sparse_sign_matrix(m, n, M_param, rng)
        U, V = _random_orthonormal(m, r, rng), _random_orthonormal(n, r, rng)
        U2, V2 = _row_max(U), _row_max(V)
        X, Y = V, E.T @ U
        for a in range(a_max + 1):
            if a:
                X = E.T @ (E @ X)
                Y = E.T @ (E @ Y)
            q_even = np.linalg.norm(X[row]) / semi_iso_even_rhs(D_even, p_moment, V2, m, n, a)
            q_odd = np.linalg.norm(Y[row]) / semi_iso_odd_rhs(D_odd, p_moment, U2, r, M_param, m, n, a)
            fail_even[a] += q_even > 1
            fail_odd[a] += q_odd > 1
            ratio_even[a] = max(ratio_even[a], q_even)
            ratio_odd[a] = max(ratio_odd[a], q_odd)
    out = []
    for a in range(a_max + 1):
        out.append(SemiIsoRow("even", a, D_even, trials, int(fail_even[a]), fail_even[a] / trials,
                              min(1.0, (2**4 / D_even) ** (2 * p_moment)), hyp_even[a], float(ratio_even[a])))
        out.append(SemiIsoRow("odd", a, D_odd, trials, int(fail_odd[a]), fail_odd[a] / trials,
                              min(1.0, (2**5 / D_odd) ** (2 * p_moment)), hyp_odd[a], float(ratio_odd[a])))
    return out


@dataclass(frozen=True)
class BasicEBounds:
    trials: int
    freq_norm: float
    freq_cross: float
    freq_bilinear: float
    hypothesis_ok: bool
    per_trial: list[tuple[bool, bool, bool]] = field(repr=False, default_factory=list)

    def as_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "per_trial"}


def basic_E_bounds_check(gt: GroundTruth, varsigma: float, M: float, trials: int, seed: int) -> BasicEBounds:
    """Frequencies of the three elementary noise inequalities over fresh draws.

    E follows :func:`sparse_sign_matrix` with the given ``varsigma`` and
    ``M``. The size condition ``M <= sqrt(N) / log^3 N`` is recorded, not
    enforced.
    """
    if trials < 1 or varsigma <= 0:
        raise ValidationError("trials and varsigma must be positive")
    m, n = gt.shape
    N = m + n
    L = math.log(N)
    U, V = gt.U, gt.V
    bil = 2 * varsigma * (math.sqrt(L) + M * float(np.max(np.abs(U))) * float(np.max(np.abs(V))) * L)
    rows = []
    for t in range(trials):
        E = sparse_sign_matrix(m, n, M, rng_for(seed, 22, t), varsigma)
        E_op = norm(E, "operator")
        ok_norm = E_op <= 1.9 * varsigma * math.sqrt(N)
        ok_cross = 2 * cross_statistic(E, U, V) <= 2 * E_op**2 * (1 + 1e-12)
        ok_bil = float(np.max(np.abs(U.T @ E @ V))) <= bil
        rows.append((ok_norm, ok_cross, ok_bil))
    arr = np.array(rows, dtype=float)
    return BasicEBounds(
        trials=trials,
        freq_norm=float(arr[:, 0].mean()),
        freq_cross=float(arr[:, 1].mean()),
        freq_bilinear=float(arr[:, 2].mean()),
        hypothesis_ok=M <= math.sqrt(N) / L**3,
        per_trial=rows,
    )


def series_fixture(m: int, n: int, sigma, target_ratio: float, S: Iterable[int], seed: int):
    """``A = U diag(sigma) V^T`` with random orthonormal factors and Gaussian E.

    E is scaled so that ``max(R1, R2) = target_ratio`` for the index set S.
    Returns ``(gt, E)``.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    r = sigma.shape[0]
    if r > min(m, n):
        raise ValidationError("more singular values than min(m, n)")
    if np.any(np.diff(sigma) >= 0):
        raise ValidationError("sigma must be strictly decreasing")
    rng = rng_for(seed, 41)
    U, V = _random_orthonormal(m, r, rng), _random_orthonormal(n, r, rng)
    gt = GroundTruth.from_matrix((U * sigma) @ V.T, r)
    G = rng_for(seed, 42).standard_normal((m, n))
    rep = perturbation_report(gt, G, S)
    # both ratios are linear in E
    return gt, G * (target_ratio / max(rep.R1, rep.R2))
