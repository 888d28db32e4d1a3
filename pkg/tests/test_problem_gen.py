import math

import numpy as np
import pytest

from ar2lab.errors import EmptySampleError, GenerationError, ValidationError
from ar2lab.linalg_core import round_matrix, svd
from ar2lab.problem_gen import (
    NoiseSpec,
    entry_moment_certificate,
    gen_ground_truth,
    gen_noise,
    noise_abs_moment,
    observe,
    read_matrix,
    rng_for,
    sample_entry_perturbation,
    sample_mask,
    write_matrix,
)


def test_tiny_ground_truth():
    gt = gen_ground_truth(2, 2, 1, 1, 1.0, seed=4)
    assert set(np.unique(gt.A)) <= {-1.0, 0.0, 1.0}
    assert svd(gt.A).numerical_rank == 1
    assert np.array_equal(round_matrix(gt.A, 1.0), gt.A)


def test_ground_truth_on_half_grid():
    gt = gen_ground_truth(50, 50, 3, 2, 0.5, seed=0)
    assert svd(gt.A).numerical_rank == 3
    assert np.all(gt.A / 0.5 == np.round(gt.A / 0.5))
    assert np.array_equal(round_matrix(gt.A, 0.5), gt.A)
    assert gt.K_A == np.max(np.abs(gt.A))


def test_gaps_and_subset_stats():
    from conftest import planted

    gt = planted(10, 8, [10.0, 7.0, 3.0], seed=1)
    assert np.allclose(gt.delta, [3, 4, 3])
    assert np.allclose(gt.Delta, [3, 3, 3])
    assert gt.sigma_S([1, 3]) == pytest.approx(3)
    # {10, 3} vs {7, 0}
    assert gt.Delta_S([1, 3]) == pytest.approx(3)
    assert gt.Delta_S([1]) == pytest.approx(3)
    with pytest.raises(ValidationError):
        gt.sigma_S([4])


def test_generation_failure_is_explicit(monkeypatch):
    import ar2lab.problem_gen as pg

    with pytest.raises(ValidationError):
        gen_ground_truth(1, 1, 2, 1, 1.0, seed=0)
    # a 1 x 1 product of draws from {-1, 0, 1} is zero with probability 5/9
    monkeypatch.setattr(pg, "MAX_RANK_ATTEMPTS", 1)
    failures = 0
    for seed in range(20):
        try:
            gen_ground_truth(1, 1, 1, 1, 1.0, seed)
        except GenerationError:
            failures += 1
    assert 0 < failures < 20


def test_generation_is_reproducible():
    a, b = gen_ground_truth(20, 15, 2, 3, 1.0, 9), gen_ground_truth(20, 15, 2, 3, 1.0, 9)
    assert np.array_equal(a.A, b.A)
    assert not np.array_equal(a.A, gen_ground_truth(20, 15, 2, 3, 1.0, 10).A)


def test_mask_full_and_density():
    full = sample_mask(10, 12, 1.0, seed=0)
    assert full.omega_size == 120 and full.p_hat == 1.0 and full.rho == 1.0
    half = sample_mask(1000, 1000, 0.5, seed=3)
    assert 0.49 <= half.p_hat <= 0.51
    assert np.array_equal(half.mask, sample_mask(1000, 1000, 0.5, seed=3).mask)
    with pytest.raises(ValidationError):
        sample_mask(3, 3, 0.0, seed=0)
    with pytest.raises(EmptySampleError):
        sample_mask(1, 1, 1e-12, seed=0)


def test_rho_concentration():
    m = n = 300
    p = 0.2
    hits = sum(abs(sample_mask(m, n, p, seed=s).rho - 1) <= math.log(m + n) / math.sqrt(p * m * n)
               for s in range(100))
    assert hits >= 99


def test_noise_laws():
    assert not np.any(gen_noise(5, 5, NoiseSpec(1.0, "zero"), 0))
    Z = gen_noise(40, 40, NoiseSpec(1.0, "rademacher_scaled"), 0)
    assert set(np.unique(Z)) == {-1.0, 1.0}
    U = gen_noise(1000, 1000, NoiseSpec(2.0, "uniform_bounded"), 1)
    assert np.max(np.abs(U)) <= 2.0
    assert np.mean(U**2) == pytest.approx(4 / 3, rel=0.05)
    assert abs(np.mean(U)) <= 3 * 2.0 / 1000
    with pytest.raises(ValidationError):
        NoiseSpec(1.0, "gaussian")
    with pytest.raises(ValidationError):
        NoiseSpec(-1.0, "uniform_bounded")


def test_observation_identities():
    gt = gen_ground_truth(30, 20, 2, 2, 1.0, seed=2)
    full = observe(gt, sample_mask(30, 20, 1.0, 0), np.zeros((30, 20)))
    assert not np.any(full.E)
    p = 0.4
    mask = sample_mask(30, 20, p, 5)
    obs = observe(gt, mask, np.zeros((30, 20)))
    off, on = ~mask.mask, mask.mask
    assert np.all(obs.observed[off] == 0)
    assert np.array_equal(obs.E[off], -gt.A[off])
    assert np.allclose(obs.E[on], gt.A[on] * (1 / p - 1))
    assert np.array_equal(obs.E, obs.observed / p - gt.A)
    assert np.allclose(obs.rescaled_est * mask.p_hat, obs.observed)


def test_unbiased_rescaling():
    gt = gen_ground_truth(30, 30, 2, 2, 1.0, seed=7)
    p = 0.3
    acc = np.zeros((30, 30))
    for s in range(2000):
        acc += observe(gt, sample_mask(30, 30, p, seed=1000 + s), np.zeros((30, 30))).rescaled_true
    assert np.max(np.abs(acc / 2000 - gt.A)) <= 5 * gt.K_A / math.sqrt(2000)


def test_moment_certificate_and_monte_carlo():
    spec = NoiseSpec(1.0, "uniform_bounded")
    K_A, p = 4.0, 0.3
    for a in (-4.0, -1.0, 0.0, 2.5, 4.0):
        for l, exact, bound in entry_moment_certificate(a, p, K_A, spec):
            assert exact <= bound * (1 + 1e-12), (a, l)
    draws = sample_entry_perturbation(2.5, p, spec, 200_000, seed=3)
    for l in (2, 3):
        exact = p * noise_abs_moment(2.5 * (1 / p - 1), spec, p, l) + (1 - p) * 2.5**l
        assert np.mean(np.abs(draws) ** l) == pytest.approx(exact, rel=0.03)
    assert abs(np.mean(draws)) < 0.05


def test_matrix_round_trip(tmp_path):
    A = np.random.default_rng(0).standard_normal((4, 3)) * 1e3
    path = tmp_path / "a.txt"
    write_matrix(path, A, eps0=0.5, seed=7)
    B, header = read_matrix(path)
    assert np.array_equal(A, B)
    assert header["eps0"] == "0.5" and header["seed"] == "7"
    (tmp_path / "bad.txt").write_text("nope\n")
    with pytest.raises(ValidationError):
        read_matrix(tmp_path / "bad.txt")


def test_substreams_are_independent():
    a = rng_for(1, 2).random(4)
    assert not np.array_equal(a, rng_for(1, 3).random(4))
    assert np.array_equal(a, rng_for(1, 2).random(4))
