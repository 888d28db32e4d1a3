import numpy as np
import pytest

from ar2lab.errors import EmptySampleError, ValidationError
from ar2lab.linalg_core import round_matrix
from ar2lab.problem_gen import NoiseSpec, gen_ground_truth, gen_noise, observe, sample_mask
from ar2lab.recovery import (
    RecoveryConfig,
    ar2_recover,
    ar_cutoff_value,
    ar_recover_baseline,
    exact_recovery_verdict,
    gap_threshold,
    select_cutoff,
)


def test_full_noiseless_observation_is_exact():
    gt = gen_ground_truth(40, 30, 3, 2, 1.0, seed=1)
    res = ar2_recover(gt.A, 40 * 30, RecoveryConfig(eps0=1.0, r_max=4, K_A=gt.K_A, K_Z=0.0))
    assert res.p_hat == 1.0
    assert np.array_equal(res.A_out, gt.A)
    assert exact_recovery_verdict(res.A_out, gt).exact
    assert 1 <= res.s <= 4


def test_threshold_formula():
    assert gap_threshold(0.5, 0.5, 4, 50, 50, 1.0) == pytest.approx(400.0)
    assert gap_threshold(1, 0, 4, 50, 50, 0.25, gap_constant=10) == pytest.approx(400.0)


@pytest.mark.parametrize("sigma, thr, want", [
    ((10, 9, 1, 0.5), 5, 2),
    ((10, 9, 8, 7), 5, 4),
    ((10, 4, 3, 0.1), 2, 3),
])
def test_select_cutoff(sigma, thr, want):
    assert select_cutoff(sigma, thr, 4) == want


def test_select_cutoff_monotone(rng):
    for _ in range(300):
        sig = np.sort(rng.exponential(5, 6))[::-1]
        t1, t2 = np.sort(rng.exponential(3, 2))
        s1, s2 = select_cutoff(sig, t1, 6), select_cutoff(sig, t2, 6)
        assert s2 <= s1 or s2 == 6
    with pytest.raises(ValidationError):
        select_cutoff([3, 2], 1, 3)


def test_scale_consistency():
    gt = gen_ground_truth(30, 30, 2, 2, 1.0, seed=4)
    mask = sample_mask(30, 30, 0.6, seed=4)
    obs = observe(gt, mask, gen_noise(30, 30, NoiseSpec(1.0, "uniform_bounded"), 4))
    cfg = RecoveryConfig(eps0=1.0, r_max=3, K_A=gt.K_A, K_Z=1.0)
    a = ar2_recover(obs.observed, mask.omega_size, cfg)
    c = 0.25
    b = ar2_recover(c * obs.observed, mask.omega_size, RecoveryConfig(eps0=c, r_max=3, K_A=c * gt.K_A, K_Z=c))
    assert a.s == b.s
    assert np.allclose(b.A_out, c * a.A_out)


def test_recover_errors():
    with pytest.raises(EmptySampleError):
        ar2_recover(np.zeros((3, 3)), 0, RecoveryConfig(1.0, 1, 1.0, 0.0))
    with pytest.raises(ValidationError):
        ar2_recover(np.full((3, 3), np.inf), 9, RecoveryConfig(1.0, 1, 1.0, 0.0))
    with pytest.raises(ValidationError):
        ar2_recover(np.ones((3, 3)), 9, RecoveryConfig(1.0, 4, 1.0, 0.0))
    with pytest.raises(ValidationError):
        RecoveryConfig(0.0, 1, 1.0, 0.0)
    with pytest.raises(ValidationError):
        RecoveryConfig(1.0, 0, 1.0, 0.0)


def test_ar_baseline():
    assert ar_cutoff_value(1000, 2, 4) == pytest.approx(15.625)
    gt = gen_ground_truth(30, 30, 2, 3, 1.0, seed=0)
    out = ar_recover_baseline(gt.A, 1.0, 2.0, 2, 1.0)
    assert np.array_equal(out, gt.A)
    with pytest.raises(ValidationError):
        ar_recover_baseline(gt.A, 0.0, 2.0, 2, 1.0)


def test_verdicts():
    gt = gen_ground_truth(6, 5, 1, 2, 0.5, seed=3)
    assert str(exact_recovery_verdict(gt.A.copy(), gt)) == "exact"
    bad = gt.A.copy()
    bad[2, 3] += 0.5
    v = exact_recovery_verdict(bad, gt)
    assert not v.exact and v.n_errors == 1 and v.max_abs_dev == 0.5
    assert str(v) == "entry_errors(1, 0.5)"


def test_small_error_rounds_to_exact(rng):
    gt = gen_ground_truth(20, 20, 2, 2, 1.0, seed=8)
    for _ in range(50):
        jitter = rng.uniform(-0.4999, 0.4999, gt.A.shape)
        assert exact_recovery_verdict(gt.A + jitter, gt).exact
        assert np.array_equal(round_matrix(gt.A + jitter, 1.0), gt.A)


def _large_instance():
    m = n = 500
    gt = gen_ground_truth(m, n, 3, 2, 1.0, seed=2024)
    mask = sample_mask(m, n, 0.3, seed=2024)
    obs = observe(gt, mask, gen_noise(m, n, NoiseSpec(1.0, "uniform_bounded"), 2024))
    return gt, mask, obs


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="at m = n = 500 the pre-rounding error is several grid steps; "
                   "see the acceptance suite and the decisions ledger")
def test_seeded_completion_instance_is_exact():
    gt, mask, obs = _large_instance()
    res = ar2_recover(obs.observed, mask.omega_size, RecoveryConfig(1.0, 3, gt.K_A, 1.0))
    assert exact_recovery_verdict(res.A_out, gt).exact


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the AR cutoff keeps noise directions that AR2's r_max excludes")
def test_ar_and_ar2_agree_on_seeded_instance():
    from ar2lab.coherence import coherence

    gt, mask, obs = _large_instance()
    res = ar2_recover(obs.observed, mask.omega_size, RecoveryConfig(1.0, 3, gt.K_A, 1.0))
    mu = coherence(gt.factors, 3).mu0
    assert np.array_equal(ar_recover_baseline(obs.observed, 0.3, mu, 3, 1.0), res.A_out)
