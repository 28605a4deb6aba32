import math

import numpy as np
import pytest

from sidlab import basis
from sidlab.basis import BasisIndex, SpectralFunction
from sidlab.errors import HypothesisError
from sidlab.dynamics import (
    PathState,
    SimConfig,
    _Ensemble,
    drift_at,
    ode_flow,
    run_ensemble,
    run_path,
    sde_step,
    split_seed,
)
from sidlab.measures import (
    ProbMeasure,
    TranslationInvariantKernel,
    fix_pi_solve,
    pi_residual,
    uniform_measure,
    xi,
)


def make_density(K, **modes):
    coeffs = np.zeros(2 * K + 1)
    coeffs[0] = 1.0
    for name, amp in modes.items():
        kind = "cosine" if name.startswith("c") else "sine"
        idx = BasisIndex(kind, int(name[1:]))
        coeffs[basis.index_position(idx, K)] = amp
    return ProbMeasure(SpectralFunction(K, coeffs))


# -- ode_flow ----------------------------------------------------------------


def test_flow_zero_kernel_contracts(K, kernel_zero):
    start = make_density(K, c1=0.4, s2=-0.2)
    states = ode_flow(kernel_zero, start, horizon=3.0, dt=0.01)
    N = 256
    d0 = np.max(np.abs(start.density.values(N) - 1.0))
    for st in states:
        dt_err = np.max(np.abs(st.mu.density.values(N) - 1.0))
        assert dt_err <= math.exp(-st.time) * d0 * (1.0 + 1e-6)


def test_flow_multi_start_reaches_unique_fixed_point(K, kernel_a1):
    rng = np.random.default_rng(21)
    limits = []
    for _ in range(5):
        coeffs = np.zeros(2 * K + 1)
        coeffs[1:5] = 0.5 * rng.standard_normal(4)
        start = xi(SpectralFunction(K, coeffs))
        states = ode_flow(kernel_a1, start, horizon=45.0, dt=0.05)
        final = states[-1].mu
        assert pi_residual(kernel_a1, final) <= 1e-8
        limits.append(final.density.coeffs)
    for a in limits:
        for b in limits:
            assert np.max(np.abs(a - b)) <= 1e-7


def test_flow_stationary_at_fixed_point(K, kernel_a1_a2):
    mu_star = fix_pi_solve(kernel_a1_a2, uniform_measure(K)).measure
    states = ode_flow(kernel_a1_a2, mu_star, horizon=10.0, dt=0.05)
    drift = np.max(np.abs(states[-1].mu.density.coeffs - mu_star.density.coeffs))
    assert drift <= 1e-9


def test_flow_rejects_bad_dt(K, kernel_zero, lam):
    with pytest.raises(ValueError):
        ode_flow(kernel_zero, lam, horizon=1.0, dt=0.0)


def test_flow_aborts_when_truncation_too_coarse():
    # strongly attractive kernel at K=4: the Gibbs response rings negative
    from sidlab.errors import ConvergenceError

    K = 4
    V = TranslationInvariantKernel({1: -3.0})
    coeffs = np.zeros(2 * K + 1)
    coeffs[1] = 0.5
    start = xi(SpectralFunction(K, coeffs))
    with pytest.raises(ConvergenceError, match="truncation too coarse"):
        ode_flow(V, start, horizon=20.0, dt=0.05)


# -- sde_step ----------------------------------------------------------------


def test_sde_brownian_increment_variance(K, kernel_zero):
    state = PathState.initial(K, seed=100)
    dt = 1e-3
    increments = []
    pos = state.position
    for _ in range(10_000):
        state = sde_step(state, kernel_zero, dt)
        d = (state.position - pos + np.pi) % (2 * np.pi) - np.pi
        increments.append(d)
        pos = state.position
    total = float(np.sum(np.square(increments)))
    assert abs(total - 10.0) <= 0.5  # quadratic variation ~ elapsed time, 5%


def test_sde_drift_is_self_repelling(K):
    # occupation concentrated near theta=0 (density 1 + 0.9 c1 injected directly)
    V = TranslationInvariantKernel({1: 1.0})
    mu_coeffs = np.zeros(2 * K + 1)
    mu_coeffs[0] = 1.0
    mu_coeffs[1] = 0.9
    # -d(V mu)/dtheta at pi/4 is 0.9 sqrt(2) sin(pi/4) = 0.9; the drift halves it
    expected_gradient_term = 0.9
    drift = drift_at(V, mu_coeffs, np.pi / 4)
    assert drift == pytest.approx(0.5 * expected_gradient_term, abs=1e-12)
    assert drift > 0.0
    assert drift_at(V, mu_coeffs, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_sde_occupation_constant_mode_exact(K, kernel_a1):
    state = PathState.initial(K, seed=101)
    for _ in range(500)[:]:
        state = sde_step(state, kernel_a1, 1e-3)
    assert state.mu_coeffs()[0] == pytest.approx(1.0, abs=1e-12)


def test_sde_occupation_growth_rate_bound(K, kernel_zero):
    state = PathState.initial(K, seed=102)
    before = state.occupation.copy()
    steps = 2000
    dt = 1e-3
    for _ in range(steps):
        state = sde_step(state, kernel_zero, dt)
    growth = np.abs(state.occupation - before)
    assert np.all(growth <= np.sqrt(2.0) * steps * dt + 1e-9)


# -- ensembles and fluctuation sampling --------------------------------------


def test_jit_and_numpy_paths_agree(K, kernel_a1):
    seeds = [split_seed(5, r) for r in range(8)]
    a = _Ensemble(kernel_a1, K, seeds, 1.0, 1.0, None)
    b = _Ensemble(kernel_a1, K, seeds, 1.0, 1.0, None)
    a._step_block_jit(400, 1e-3)
    b._step_block_numpy(400, 1e-3)
    np.testing.assert_allclose(a.positions, b.positions, atol=1e-12)
    np.testing.assert_allclose(a.acc_c, b.acc_c, atol=1e-12)
    np.testing.assert_allclose(a.acc_s, b.acc_s, atol=1e-12)


def test_run_path_deterministic(K, kernel_a1, lam, c1):
    cfg = SimConfig(mu_star=lam, log_times=(0.5, 1.0), dt=1e-3, test_functions=(c1,))
    a = run_path(kernel_a1, cfg, seed=7)
    b = run_path(kernel_a1, cfg, seed=7)
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.delta.density.coeffs, sb.delta.density.coeffs)
        np.testing.assert_array_equal(sa.delta_g, sb.delta_g)
    c = run_path(kernel_a1, cfg, seed=8)
    assert not np.array_equal(a[0].delta_g, c[0].delta_g)


def test_run_path_sample_fields(K, kernel_a1, lam, c1):
    cfg = SimConfig(mu_star=lam, log_times=(0.5,), dt=1e-3, test_functions=(c1,))
    (sample,) = run_path(kernel_a1, cfg, seed=9)
    # delta coefficients are e^{t/2} (mu - mu*)
    assert sample.delta.density.coeffs[0] == pytest.approx(0.0, abs=1e-12)
    # d_function is the kernel applied to delta: mode-1 only for the a1 kernel
    assert sample.d_function.coeffs[1] == pytest.approx(sample.delta.density.coeffs[1])
    np.testing.assert_allclose(sample.d_function.coeffs[3:], 0.0, atol=1e-14)
    # delta_g pairing agrees with the coefficient dot product
    assert sample.delta_g[0] == pytest.approx(float(sample.delta.density.coeffs @ c1.coeffs))


def test_run_refuses_biased_mu_star(K, kernel_a1, c1):
    bad = make_density(K, c1=0.2)  # not the fixed point
    cfg = SimConfig(mu_star=bad, log_times=(0.5,), dt=1e-3, test_functions=(c1,))
    with pytest.raises(HypothesisError):
        run_path(kernel_a1, cfg, seed=1)


def test_ensemble_centering_zero_kernel(K, kernel_zero, lam, c1):
    # E[Delta_t c1] = 0: the mean over seeds stays within 3 SE of zero
    cfg = SimConfig(mu_star=lam, log_times=(3.0,), dt=2e-3, test_functions=(c1,))
    seeds = [split_seed(1234, r) for r in range(400)]
    res = run_ensemble(kernel_zero, cfg, seeds)
    vals = res.delta_g[:, 0, 0]
    se = float(np.std(vals, ddof=1)) / np.sqrt(len(vals))
    assert abs(float(np.mean(vals))) <= 3.0 * se


def test_ensemble_variance_approaches_limit_zero_kernel(K, kernel_zero, lam, c1):
    # Var(Delta_t c1) -> chat(c1, c1) = 4 as t grows, and the law looks Gaussian
    from sidlab.harness import ks_normality

    cfg = SimConfig(mu_star=lam, log_times=(2.0, 4.0), dt=2e-3, test_functions=(c1,))
    seeds = [split_seed(77, r) for r in range(400)]
    res = run_ensemble(kernel_zero, cfg, seeds)
    v = float(np.var(res.delta_g[:, 1, 0], ddof=1))
    se = 4.0 * np.sqrt(2.0 / (len(seeds) - 1))
    assert abs(v - 4.0) <= 3.0 * se
    _, p = ks_normality(res.delta_g[:, 1, 0], 4.0)
    assert p >= 0.01


@pytest.mark.slow
def test_dt_halving_within_monte_carlo_error(K, kernel_a1, lam, c1):
    # weak-order sanity at t=5: doubling dt moves the variance less than the CI width
    seeds = [split_seed(20260809, r) for r in range(400)]
    out = {}
    for dt in (1e-3, 2e-3):
        cfg = SimConfig(mu_star=lam, log_times=(5.0,), dt=dt, test_functions=(c1,))
        res = run_ensemble(kernel_a1, cfg, seeds)
        out[dt] = float(np.var(res.delta_g[:, 0, 0], ddof=1))
    ci_width = 2.0 * 1.96 * out[1e-3] * np.sqrt(2.0 / (len(seeds) - 1))
    assert abs(out[1e-3] - out[2e-3]) <= ci_width


def test_split_seed_is_stable():
    # fixed values guard the documented splitting rule
    assert split_seed(0, 0) == split_seed(0, 0)
    assert split_seed(20260809, 3) != split_seed(20260809, 4)
    assert split_seed(1, 0) != split_seed(0, 1)


def test_ensemble_matches_run_path_statistics(K, kernel_a1, lam, c1):
    # the ensemble member with seed s equals run_path with the same seed
    cfg = SimConfig(mu_star=lam, log_times=(0.5,), dt=1e-3, test_functions=(c1,))
    seeds = [split_seed(3, 0), split_seed(3, 1)]
    res = run_ensemble(kernel_a1, cfg, seeds)
    single = run_path(kernel_a1, cfg, seeds[1])
    np.testing.assert_allclose(res.delta_g[1, 0], single[0].delta_g, atol=1e-12)


def test_general_matrix_kernel_matches_diagonal_path(K, kernel_a1):
    # the numpy matrix-mode drift and the jit diagonal-mode drift agree exactly
    from sidlab.measures import GeneralKernel

    Vg = GeneralKernel(kernel_a1.galerkin_matrix(K))
    seeds = [split_seed(99, r) for r in range(6)]
    a = _Ensemble(kernel_a1, K, seeds, 1.0, 1.0, None)
    b = _Ensemble(Vg, K, seeds, 1.0, 1.0, None)
    a.run_to(1.4, 1e-3)
    b.run_to(1.4, 1e-3)
    np.testing.assert_allclose(a.positions, b.positions, atol=1e-10)
    np.testing.assert_allclose(a.acc_c, b.acc_c, atol=1e-10)


@pytest.mark.slow
def test_diffusion_kernel_full_loop(K):
    # ergodic-average CLT for a frozen potential: Var(Delta_t g) -> 2 mu*(g Q g)
    from sidlab.measures import DiffusionPotentialKernel, fix_pi_solve
    from sidlab.operators import OperatorSet

    v = 0.8 * SpectralFunction.unit(K, BasisIndex("cosine", 1))
    V = DiffusionPotentialKernel(v)
    mu = fix_pi_solve(V, uniform_measure(K), damping=1.0).measure
    ops = OperatorSet(mu, V)
    c1 = SpectralFunction.unit(K, BasisIndex("cosine", 1))
    s1 = SpectralFunction.unit(K, BasisIndex("sine", 1))
    cfg = SimConfig(mu_star=mu, log_times=(5.0,), dt=1e-3, test_functions=(c1, s1))
    seeds = [split_seed(314159, r) for r in range(400)]
    res = run_ensemble(V, cfg, seeds)
    for i, g in enumerate((c1, s1)):
        pred = float(g.coeffs @ ops.chat_matrix @ g.coeffs)
        emp = float(np.var(res.delta_g[:, 0, i], ddof=1))
        se = pred * np.sqrt(2.0 / (len(seeds) - 1))
        assert abs(emp - pred) <= 3.0 * se
