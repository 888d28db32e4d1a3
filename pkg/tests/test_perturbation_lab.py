import math

import numpy as np
import pytest

from ar2lab.errors import DegenerateSpectrumError, HypothesisError, ValidationError
from ar2lab.linalg_core import norm, symmetrize
from ar2lab.perturbation_lab import (
    basic_E_bounds_check,
    cross_statistic,
    deterministic_dk_bounds,
    dk_matcom_bound,
    perturbation_report,
    random_dk_quantities,
    resolvent_series_check,
    semi_isotropic_check,
    series_fixture,
    sparse_sign_matrix,
    subspace_diff,
)
from ar2lab.problem_gen import GroundTruth, gen_ground_truth
from conftest import planted


def row_norm(X):
    return np.max(np.linalg.norm(X, axis=1))


# ---------------------------------------------------------------- report


def test_report_without_perturbation():
    gt = planted(20, 15, [6.0, 3.0, 1.0], seed=0)
    rep = perturbation_report(gt, np.zeros((20, 15)), [1, 2])
    assert rep.E_op == rep.y == rep.R1 == rep.R2 == rep.R3 == 0
    assert rep.tau1_det == pytest.approx(row_norm(gt.U) / math.sqrt(3))
    assert rep.tau2_det == pytest.approx(row_norm(gt.V) / math.sqrt(3))
    assert rep.hypothesis_ok
    assert math.isnan(rep.R_S)


def test_rank_one_ratio_substitution(rng):
    gt = planted(10, 8, [4.0], seed=1)
    E = 0.01 * rng.standard_normal((10, 8))
    rep = perturbation_report(gt, E, [1])
    assert rep.Delta_S == pytest.approx(4.0)
    assert rep.R2 == pytest.approx(math.sqrt(2) * norm(E, "operator") / 4.0)
    assert rep.y == 0


def test_report_invariants_on_random_instance(rng):
    gt = planted(60, 60, [30.0, 20.0, 10.0], seed=2)
    E = rng.standard_normal((60, 60))
    rep = perturbation_report(gt, E, [1, 2])
    assert rep.y <= rep.E_op**2 + 1e-9
    assert row_norm(gt.U) / math.sqrt(3) - 1e-12 <= rep.tau1_det <= 1 + 1e-12
    assert row_norm(gt.V) / math.sqrt(3) - 1e-12 <= rep.tau2_det <= 1 + 1e-12
    assert rep.a_max == math.floor(10 * math.log(120))
    d = rep.as_dict()
    assert d["S"] == [1, 2] and set(d) >= {"R1", "R2", "R3", "tau1_det"}


def test_tau_matches_explicit_powers(rng):
    gt = planted(12, 9, [5.0, 2.0], seed=3)
    E = rng.standard_normal((12, 9))
    rep = perturbation_report(gt, E, [1])
    H = np.linalg.norm(E, 2)
    G = E @ E.T
    want = 0.0
    for a in range(rep.a_max + 1):
        P = np.linalg.matrix_power(G, a)
        want = max(want, row_norm(P @ gt.U) / H ** (2 * a), row_norm(P @ E @ gt.V) / H ** (2 * a + 1))
    assert rep.tau1_det == pytest.approx(want / math.sqrt(2), rel=1e-9)


def test_cross_statistic_definition(rng):
    U, _ = np.linalg.qr(rng.standard_normal((7, 3)))
    V, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    E = rng.standard_normal((7, 5))
    want = max(abs(U[:, i] @ E @ E.T @ U[:, j]) + abs(V[:, i] @ E.T @ E @ V[:, j])
               for i in range(3) for j in range(3) if i != j) / 2
    assert cross_statistic(E, U, V) == pytest.approx(want)


def test_degenerate_spectrum():
    gt = planted(6, 6, [2.0, 2.0], seed=4)
    with pytest.raises(DegenerateSpectrumError):
        perturbation_report(gt, np.zeros((6, 6)), [1])
    # the full tied block is fine
    assert perturbation_report(gt, np.zeros((6, 6)), [1, 2]).Delta_S == pytest.approx(2.0)


def test_shape_mismatch():
    gt = planted(6, 5, [2.0], seed=4)
    with pytest.raises(ValidationError):
        perturbation_report(gt, np.zeros((5, 6)), [1])


# ---------------------------------------------------------------- subspace differences


def test_subspace_diff_zero():
    gt = planted(9, 7, [3.0, 1.0], seed=5)
    d = subspace_diff(gt, np.zeros((9, 7)), [1])
    assert all(v == pytest.approx(0, abs=1e-12) for v in d.norms_U.values())
    assert d.approx_diff_inf == pytest.approx(0, abs=1e-12)


def test_classical_davis_kahan(rng):
    gt = planted(30, 25, [10.0, 7.0, 5.0], seed=6)
    for scale in (1e-3, 1e-2, 5e-2):
        E = scale * rng.standard_normal((30, 25))
        d = subspace_diff(gt, E, [1, 2, 3])
        dV = d.proj_diff_V
        assert np.allclose(dV, dV.T, atol=1e-10)
        assert d.norms_V["operator"] <= 1 + 1e-9
        assert d.norms_V["operator"] <= 2 * norm(E, "operator") / gt.delta[-1]


def test_two_by_two_rotation():
    sig, eps = 2.0, 0.3
    gt = GroundTruth.from_matrix(np.diag([sig, 0.0]), 1)
    E = np.array([[0.0, 0.0], [eps, 0.0]])
    d = subspace_diff(gt, E, [1])
    q = sig**2 + eps**2
    want_U = np.array([[sig**2 / q - 1, sig * eps / q], [sig * eps / q, eps**2 / q]])
    assert np.allclose(d.proj_diff_U, want_U, atol=1e-12)
    assert np.allclose(d.proj_diff_V, 0, atol=1e-12)
    # A~_1 - A_1 = E exactly since A + E is rank one
    assert np.allclose(d.approx_diff, E, atol=1e-12)


def test_symmetrized_projector_blocks(rng):
    gt = planted(8, 6, [4.0, 2.0, 1.0], seed=7)
    E = 0.05 * rng.standard_normal((8, 6))
    d = subspace_diff(gt, E, [1, 2])
    w, Wfull = np.linalg.eigh(symmetrize(gt.A + E))
    order = np.argsort(-np.abs(w))
    pick = [k for k in order[:4]]
    Pt = Wfull[:, pick] @ Wfull[:, pick].T
    w0, W0 = np.linalg.eigh(symmetrize(gt.A))
    pick0 = np.argsort(-np.abs(w0))[:4]
    P0 = W0[:, pick0] @ W0[:, pick0].T
    D = Pt - P0
    assert np.allclose(D[:8, :8], d.proj_diff_U, atol=1e-9)
    assert np.allclose(D[8:, 8:], d.proj_diff_V, atol=1e-9)
    assert np.allclose(D[:8, 8:], 0, atol=1e-9)


def test_weyl_warning(rng):
    gt = planted(10, 10, [3.0, 2.9], seed=8)
    with pytest.warns(RuntimeWarning):
        subspace_diff(gt, 0.2 * rng.standard_normal((10, 10)), [1])


def test_localization_ratio_bounded(rng):
    gt = planted(40, 40, [20.0, 10.0], seed=9)
    d = subspace_diff(gt, 0.3 * rng.standard_normal((40, 40)), [1, 2])
    assert d.approx_diff_inf <= norm(d.approx_diff, "operator")


# ---------------------------------------------------------------- bounds


def test_matcom_bound_formula():
    gt = planted(30, 20, [50.0], seed=10)
    p, K, mu0 = 0.4, 2.0, 1.5
    b = dk_matcom_bound(gt, p, K, mu0, 1)
    N, L = 50, math.log(50)
    t1 = K / 50 * math.sqrt(N / p)
    t2 = K * math.sqrt(L) / (50 * math.sqrt(p))
    t3 = mu0 * K * L / (p * 50 * math.sqrt(600))
    assert b.summands == pytest.approx((t1, t2, t3))
    pre = (L + mu0) * L**2 / math.sqrt(600)
    assert b.value == pytest.approx(pre * 50 * (t1 + t2 + t3))
    b2 = dk_matcom_bound(gt, 2 * p, K, mu0, 1)
    assert b2.summands[0] == pytest.approx(t1 / math.sqrt(2), rel=1e-14)


def test_matcom_bound_double_entry():
    gt = gen_ground_truth(40, 30, 2, 2, 1.0, seed=11)
    p, K, mu0, s = 0.35, gt.K_A + 1.0, 2.2, 2
    m, n = 40, 30
    N = m + n
    sig, dl = gt.sigma[s - 1], gt.sigma[s - 1]  # delta_r = sigma_r
    lg = np.log(N)
    expr = ((lg + mu0) * lg**2 / np.sqrt(m * n)) * 2 * sig * (
        K / sig * np.sqrt(N / p) + 2 * K * np.sqrt(lg) / (dl * np.sqrt(p))
        + 4 * mu0 * K * lg / (p * dl * np.sqrt(m * n)))
    b = dk_matcom_bound(gt, p, K, mu0, s)
    assert b.value == pytest.approx(float(expr), rel=1e-12)
    assert b.density_ok == (p >= (1 / m + 1 / n) * lg)
    assert b.gap_ok == (dl >= 40 * 2 * K * np.sqrt(N / p))


def test_deterministic_bounds(rng):
    gt = planted(25, 20, [9.0, 6.0, 2.0], seed=12)
    zero = deterministic_dk_bounds(perturbation_report(gt, np.zeros((25, 20)), [1, 2]), gt, [1, 2])
    assert zero.entry_tau1 == zero.row_tau2 == zero.approx == 0
    rep = perturbation_report(gt, 0.05 * rng.standard_normal((25, 20)), [1, 2])
    b = deterministic_dk_bounds(rep, gt, [1, 2])
    assert b.row_tau1 / b.entry_tau1 == pytest.approx(1 / rep.tau1_det)
    assert b.row_tau2 / b.entry_tau2 == pytest.approx(1 / rep.tau2_det)
    assert b.approx == pytest.approx(rep.tau1_det * rep.tau2_det * 6.0 * b.core)
    odd = deterministic_dk_bounds(perturbation_report(gt, 0.05 * np.ones((25, 20)), [2]), gt, [2])
    assert math.isnan(odd.approx)
    with pytest.raises(ValidationError):
        deterministic_dk_bounds(rep, gt, [1])


def test_random_quantities_limits_and_substitution():
    gt = gen_ground_truth(60, 50, 2, 2, 1.0, seed=13)
    N, L = 110, math.log(110)
    U2, V2 = row_norm(gt.U), row_norm(gt.V)
    tiny = random_dk_quantities(gt, 1.0, 1e-12, [1, 2])
    assert tiny.tau1 == pytest.approx(U2 * L / math.sqrt(2) + L**1.5 / math.sqrt(N))
    assert tiny.tau2 == pytest.approx(V2 * L / math.sqrt(2) + L**1.5 / math.sqrt(N))

    p, K = 0.4, gt.K_A + 1.0
    mu0 = max(60 * row_norm(gt.U) ** 2, 50 * row_norm(gt.V) ** 2) / 2
    rq = random_dk_quantities(gt, K / math.sqrt(p), 1 / math.sqrt(p), [1, 2])
    dk = dk_matcom_bound(gt, p, K, mu0, 2)
    a, b, c = rq.R_terms
    t1, t2, t3 = dk.summands
    assert a == pytest.approx(t1)
    noise_part = 2 * K * math.sqrt(L) / (math.sqrt(p) * gt.Delta_S([1, 2]))
    assert noise_part == pytest.approx(t2)
    assert b - noise_part <= t3 * (1 + 1e-12)
    # the absorbed term: c / a = 2 r K sqrt(N / p) / delta_s, at most 1/20 under the gap condition
    assert c / a == pytest.approx(2 * 2 * K * math.sqrt(N / p) / gt.delta[1])
    with pytest.raises(ValidationError):
        random_dk_quantities(gt, 0.0, 1.0, [1])


# ---------------------------------------------------------------- series


def test_series_zero_perturbation():
    gt = planted(6, 5, [3.0, 1.0], seed=14)
    chk = resolvent_series_check(gt, np.zeros((6, 5)), [1], 0, gamma_max=4)
    assert chk.exact_norm == 0
    assert all(t == 0 for t in chk.term_norms)


def test_first_order_term_matches_perturbation_formula(rng):
    gt = GroundTruth.from_matrix(np.outer([0.6, 0.8], [1.0, 0.0]) * 2.0, 1)
    E = 0.01 * rng.standard_normal((2, 2))
    chk = resolvent_series_check(gt, E, [1], 0, gamma_max=2)
    H, sE = symmetrize(gt.A), symmetrize(E)
    w, W = np.linalg.eigh(H)
    inside = [k for k in range(4) if abs(abs(w[k]) - 2.0) < 1e-9]
    outside = [k for k in range(4) if k not in inside]
    T1 = np.zeros((4, 4))
    for i in inside:
        for j in outside:
            Pi, Pj = np.outer(W[:, i], W[:, i]), np.outer(W[:, j], W[:, j])
            T1 += (Pi @ sE @ Pj + Pj @ sE @ Pi) / (w[i] - w[j])
    assert np.allclose(chk.terms[0], T1, atol=1e-12)


def test_series_converges_for_rank_difference():
    gt, E = series_fixture(12, 10, [6.0, 3.0, 1.5], 0.1, [1], seed=15)
    chk = resolvent_series_check(gt, E, [1], 1, gamma_max=25)
    assert chk.hypothesis_ok
    assert chk.relative_errors[-1] < 1e-9
    assert all(b <= a * (1 + 1e-9) for a, b in zip(chk.partial_sum_errors[5:], chk.partial_sum_errors[6:])
               if a > 1e-13 * chk.exact_norm)
    assert len(chk.rows()) == 25


def test_series_fixture_hits_target_ratio():
    gt, E = series_fixture(24, 24, [10.0, 8.0, 6.0, 4.0], 0.1, [1, 2], seed=0)
    rep = perturbation_report(gt, E, [1, 2])
    assert max(rep.R1, rep.R2) == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        series_fixture(5, 5, [1.0, 2.0], 0.1, [1], seed=0)


# ---------------------------------------------------------------- Monte Carlo lemmas


def test_sparse_sign_moments(rng):
    X = sparse_sign_matrix(400, 400, 2.0, rng)
    assert set(np.unique(X)) <= {-2.0, 0.0, 2.0}
    assert np.mean(X**2) == pytest.approx(1.0, rel=0.03)
    assert np.mean(np.abs(X) ** 4) == pytest.approx(4.0, rel=0.05)
    assert set(np.unique(sparse_sign_matrix(5, 5, 1.0, rng))) == {-1.0, 1.0}


def test_semi_isotropic_zero_power_is_deterministic():
    rows = semi_isotropic_check(40, 30, 1.0, 0, 1, trials=20, seed=1, D_even=1.0, D_odd=2**10,
                                allow_outside_hypothesis=True)
    even = [r for r in rows if r.case == "even"][0]
    assert even.failures == 0 and even.max_ratio <= 1


def test_semi_isotropic_refuses_outside_hypothesis():
    with pytest.raises(HypothesisError):
        semi_isotropic_check(200, 200, 1.0, 1, 1, trials=2, seed=0)
    rows = semi_isotropic_check(200, 200, 1.0, 1, 1, trials=2, seed=0, allow_outside_hypothesis=True)
    flags = {(r.case, r.a): r.hypothesis for r in rows}
    assert flags[("even", 0)] and flags[("odd", 0)] and not flags[("odd", 1)]
    assert rows[0].tail == pytest.approx((16 / 2**10) ** 2)
    assert rows[1].tail == pytest.approx((32 / 2**10) ** 2)


def test_basic_noise_bounds():
    gt = planted(300, 300, [50.0, 30.0], seed=16)
    res = basic_E_bounds_check(gt, 1.0, 1.0, trials=100, seed=3)
    assert res.freq_cross == 1.0
    assert res.freq_norm >= 0.99
    assert res.freq_bilinear >= 0.95
    assert not res.hypothesis_ok
