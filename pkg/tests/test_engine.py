import math

import numpy as np
import pytest
from scipy import stats

from hawkes_meanfield.meanfield import TimeGrid
from hawkes_meanfield.engine import (
    EventLog,
    empirical_measure,
    event_log_from_bytes,
    event_log_to_bytes,
    event_log_to_csv,
    mean_path,
    simulate_coupled,
    simulate_hawkes,
    simulate_perturbed,
    sup_path_difference,
)
from hawkes_meanfield.rng import derive_seed


def chi_square_poisson_p(counts: np.ndarray, mean: float) -> float:
    """Goodness-of-fit p-value of integer samples against Poisson(mean)."""
    n = counts.size
    kmax = int(counts.max()) + 1
    obs = np.bincount(counts, minlength=kmax + 1).astype(float)
    pmf = np.zeros(kmax + 1)
    pmf[0] = math.exp(-mean)
    for x in range(kmax):
        pmf[x + 1] = pmf[x] * mean / (x + 1)
    pmf[kmax] = max(1.0 - pmf[:kmax].sum(), 0.0)  # fold the tail into the last bin
    exp = n * pmf
    # merge bins with expected count < 5 from the right
    while exp.size > 2 and exp[-1] < 5.0:
        exp[-2] += exp[-1]
        obs[-2] += obs[-1]
        exp, obs = exp[:-1], obs[:-1]
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return float(stats.chi2.sf(stat, df=exp.size - 1))


def test_homogeneous_mean_count(zero_kernel, const2_rate):
    log = simulate_hawkes(10000, zero_kernel, const2_rate, 1.0, seed=11)
    assert log.total_jumps / log.N == pytest.approx(2.0, abs=0.05)


def test_determinism(zero_kernel, const2_rate):
    a = simulate_hawkes(500, zero_kernel, const2_rate, 1.0, seed=77)
    b = simulate_hawkes(500, zero_kernel, const2_rate, 1.0, seed=77)
    assert all(np.array_equal(x, y) for x, y in zip(a.jumps, b.jumps))
    c = simulate_hawkes(500, zero_kernel, const2_rate, 1.0, seed=78)
    assert any(not np.array_equal(x, y) for x, y in zip(a.jumps, c.jumps))


def test_lln_toward_limit_mean(exp_kernel, affine_rate, explin_mean):
    log = simulate_hawkes(5000, exp_kernel, affine_rate, 1.0, seed=7)
    assert log.total_jumps / log.N == pytest.approx(explin_mean.m_final, abs=0.05)


def test_event_log_invariants(exp_kernel, affine_rate):
    log = simulate_hawkes(200, exp_kernel, affine_rate, 1.0, seed=3)
    for j in log.jumps:
        assert np.all(j > 0.0) and np.all(j <= 1.0)
        assert np.all(np.diff(j) > 0.0)


def test_homogeneous_counts_poisson_chi2(zero_kernel, const2_rate):
    log = simulate_hawkes(5000, zero_kernel, const2_rate, 1.0, seed=101)
    counts = log.counts(1.0)
    assert chi_square_poisson_p(counts, 2.0) > 0.01


def test_exchangeability_by_stream_permutation(exp_kernel, affine_rate):
    base = simulate_hawkes(2, exp_kernel, affine_rate, 5.0, seed=13)
    swap = simulate_hawkes(2, exp_kernel, affine_rate, 5.0, seed=13, stream_indices=[1, 0])
    assert np.array_equal(base.jumps[0], swap.jumps[1])
    assert np.array_equal(base.jumps[1], swap.jumps[0])


def test_mean_path_examples():
    grid = TimeGrid.from_T_dt(1.0, 0.2)
    empty = EventLog(N=3, T=1.0, jumps=(np.array([]),) * 3, seed=0, kind="hawkes")
    assert np.array_equal(mean_path(empty, grid), np.zeros(6))
    log = EventLog(
        N=2, T=1.0, jumps=(np.array([0.5]), np.array([0.25, 0.75])), seed=0, kind="hawkes"
    )
    zbar = mean_path(log, grid)
    assert zbar[grid.index_of(0.6)] == pytest.approx(1.0)
    assert np.all(np.diff(zbar) >= 0)
    assert np.allclose((zbar * 2) % 1.0, 0.0)  # increments are multiples of 1/N
    single = EventLog(N=1, T=1.0, jumps=(np.array([0.3, 0.7]),), seed=0, kind="hawkes")
    assert mean_path(single, grid)[-1] == pytest.approx(2.0)


def test_empirical_measure_examples():
    log = EventLog(N=1, T=1.0, jumps=(np.array([0.3, 0.7]),), seed=0, kind="hawkes")
    pmf, ovf = empirical_measure(log, 0.5, 3)
    assert np.array_equal(pmf, [0.0, 1.0, 0.0, 0.0]) and ovf == 0
    empty = EventLog(N=4, T=1.0, jumps=(np.array([]),) * 4, seed=0, kind="hawkes")
    pmf, ovf = empirical_measure(empty, 1.0, 2)
    assert pmf[0] == 1.0 and ovf == 0


def test_empirical_measure_tv_against_limit(zero_kernel, const2_rate):
    log = simulate_hawkes(10000, zero_kernel, const2_rate, 1.0, seed=19)
    pmf, ovf = empirical_measure(log, 1.0, 30)
    pois = np.zeros(31)
    pois[0] = math.exp(-2.0)
    for x in range(30):
        pois[x + 1] = pois[x] * 2.0 / (x + 1)
    tv = 0.5 * np.sum(np.abs(pmf - pois)) + 0.5 * (ovf / log.N + (1.0 - pois.sum()))
    assert tv <= 0.02
    assert pmf.sum() + ovf / log.N == pytest.approx(1.0, abs=1e-15)


def test_coupling_identical_when_no_excitation(zero_kernel, const2_rate, homog_mean):
    c = simulate_coupled(1000, zero_kernel, const2_rate, homog_mean, 1.0, seed=5)
    for a, b in zip(c.hawkes.jumps, c.poisson.jumps):
        assert np.array_equal(a, b)
    assert np.all(sup_path_difference(c.hawkes, c.poisson) == 0.0)


def test_coupling_poisson_marginal_chi2(exp_kernel, affine_rate, explin_mean):
    c = simulate_coupled(5000, exp_kernel, affine_rate, explin_mean, 1.0, seed=23)
    counts = c.poisson.counts(1.0)
    assert chi_square_poisson_p(counts, explin_mean.m_final) > 0.01


def test_coupling_difference_shrinks_with_n(exp_kernel, affine_rate, explin_mean):
    means = []
    for n_particles in (100, 1600):
        vals = []
        for rep in range(30):
            c = simulate_coupled(
                n_particles, exp_kernel, affine_rate, explin_mean, 1.0,
                seed=derive_seed(31, 100 * n_particles + rep),
            )
            vals.append(sup_path_difference(c.hawkes, c.poisson).mean())
        means.append(np.mean(vals))
    assert means[1] < 0.5 * means[0]  # expect ~ 1/4 under sqrt scaling


def _ell_grad(grid: TimeGrid, K: int) -> np.ndarray:
    g = np.ones((grid.n + 1, K + 1))
    g[:, K] = 0.0
    return g


def test_perturbed_zero_tilt_identical(exp_kernel, affine_rate):
    grid = TimeGrid.from_T_dt(1.0, 0.01)
    base = simulate_hawkes(300, exp_kernel, affine_rate, 1.0, seed=29)
    pert = simulate_perturbed(
        300, exp_kernel, affine_rate, np.zeros((grid.n + 1, 31)), grid, 0.3, 1.0, seed=29
    )
    assert all(np.array_equal(a, b) for a, b in zip(base.jumps, pert.jumps))


def test_perturbed_constant_tilt_poisson_oracle(zero_kernel, const2_rate):
    # h = 0, phi = 2, psi = ell: per-particle Poisson with rate 2 e^u
    grid = TimeGrid.from_T_dt(1.0, 0.01)
    u = 0.25
    n_particles, reps = 1000, 30
    counts = []
    for rep in range(reps):
        log = simulate_perturbed(
            n_particles, zero_kernel, const2_rate, _ell_grad(grid, 30), grid, u, 1.0,
            seed=derive_seed(37, rep),
        )
        counts.append(log.total_jumps / n_particles)
    target = 2.0 * math.exp(u)
    se = math.sqrt(target / (n_particles * reps))
    assert abs(np.mean(counts) - target) <= 3.0 * se


def test_perturbed_positive_tilt_increases_mean(exp_kernel, affine_rate):
    grid = TimeGrid.from_T_dt(1.0, 0.01)
    up, base = [], []
    for rep in range(100):
        seed = derive_seed(41, rep)
        log_p = simulate_perturbed(
            200, exp_kernel, affine_rate, 0.5 * _ell_grad(grid, 40), grid, 0.4, 1.0, seed=seed
        )
        log_0 = simulate_hawkes(200, exp_kernel, affine_rate, 1.0, seed=seed)
        up.append(log_p.total_jumps)
        base.append(log_0.total_jumps)
    assert np.mean(up) > np.mean(base)


def test_sup_path_difference_cancels_shared_jumps():
    a = EventLog(N=1, T=1.0, jumps=(np.array([0.2, 0.5]),), seed=0, kind="hawkes")
    b = EventLog(N=1, T=1.0, jumps=(np.array([0.2, 0.8]),), seed=0, kind="mf_poisson")
    # shared jump at 0.2 cancels; divergence is 1 between 0.5 and 0.8
    assert sup_path_difference(a, b)[0] == 1.0


def test_binary_round_trip(exp_kernel, affine_rate):
    log = simulate_hawkes(50, exp_kernel, affine_rate, 1.0, seed=43)
    back = event_log_from_bytes(event_log_to_bytes(log))
    assert back.N == log.N and back.T == log.T and back.seed == log.seed
    assert all(np.array_equal(a, b) for a, b in zip(back.jumps, log.jumps))
    assert event_log_to_bytes(log)[:4] == b"HWKS"


def test_binary_rejects_garbage():
    with pytest.raises(ValueError):
        event_log_from_bytes(b"NOPE" + b"\0" * 40)


def test_csv_format(zero_kernel, const2_rate):
    log = simulate_hawkes(3, zero_kernel, const2_rate, 1.0, seed=47)
    text = event_log_to_csv(log)
    lines = text.strip().split("\n")
    assert lines[0] == "particle,jump_time"
    assert len(lines) == 1 + log.total_jumps
