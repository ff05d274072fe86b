"""Forward/pullback integration, variational flow, and the linear response."""

import math

import numpy as np
import pytest

from fracsync import ContractViolationError, Grid, IntegrationBlowupError
from fracsync.drift import DiffusionMatrix, DriftConstants, DriftModel, make_drift
from fracsync.fbm import sample_fbm, sample_wiener
from fracsync.integrate import (
    absorbing_radius,
    c_bar_f,
    default_ball_radius,
    fou_evaluate,
    heun_states,
    integrate_forward,
    pullback_solve,
)


def _zero_drift(d):
    zeros = lambda x: np.zeros_like(x)
    return DriftModel(
        name="zero",
        dim=d,
        evaluate=zeros,
        jacobian=lambda x: np.zeros(x.shape[:-1] + (d, d)),
        constants=DriftConstants(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1),
        params={},
        jacobian_apply=lambda x, v: np.zeros_like(v),
        bounded_jacobian=True,
        jac_norm_bound=lambda r: 0.0,
    )


def _explosive_drift(d):
    sq = lambda x: np.sum(x * x, axis=-1, keepdims=True)
    return DriftModel(
        name="explosive",
        dim=d,
        evaluate=lambda x: x * sq(x),
        jacobian=lambda x: np.eye(d) * sq(x)[..., None],
        constants=DriftConstants(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3),
        params={},
        jacobian_apply=None,
        jac_norm_bound=lambda r: 3.0 * r * r,
    )


def test_pure_noise_integration_exact():
    d = 2
    drift = _zero_drift(d)
    grid = Grid.forward(2.0, 0.01)
    driver = sample_fbm(grid, 0.4, d, seed=1)
    sigma = DiffusionMatrix.isotropic(1.5, d)
    run = integrate_forward(drift, sigma, driver, [0.3, -0.4], 2.0)
    expected = np.array([0.3, -0.4]) + 1.5 * driver.values
    assert np.allclose(run.states, expected, atol=1e-10)


def test_linear_decay_state_and_jacobian():
    drift = make_drift("linear", 2, rate=1.0)
    dt = 1e-3
    grid = Grid.forward(1.0, dt)
    driver = sample_wiener(grid, 2, seed=0)
    sigma = DiffusionMatrix.isotropic(1e-14, 2)
    run = integrate_forward(drift, sigma, driver, [1.0, 2.0], 1.0, with_jacobian=True)
    assert np.allclose(run.states[-1], np.array([1.0, 2.0]) * math.exp(-1.0), atol=5e-6)
    assert np.allclose(run.jacobians[-1], math.exp(-1.0) * np.eye(2), atol=5e-6)
    assert np.allclose(run.jacobians[0], np.eye(2))


def test_cocycle_split_vs_whole_bitwise():
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(0.8, 2)
    grid = Grid.forward(2.0, 1e-2)
    driver = sample_fbm(grid, 0.3, 2, seed=5)
    whole = integrate_forward(drift, sigma, driver, [0.4, -0.1], 2.0)
    first = integrate_forward(drift, sigma, driver, [0.4, -0.1], 1.2)
    # continue on the same driver segment from the intermediate state
    incs = (driver.increments(1.2, 2.0) @ sigma.sigma.T)[:, None, :]
    cont = heun_states(drift, incs, first.final_state[None, :], 1e-2, record=True)
    assert np.array_equal(cont["trajectory"][-1, 0], whole.final_state)


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_blowup_raises_with_last_time():
    drift = _explosive_drift(1)
    grid = Grid.forward(5.0, 1e-2)
    driver = sample_wiener(grid, 1, seed=2)
    sigma = DiffusionMatrix.isotropic(1.0, 1)
    with pytest.raises(IntegrationBlowupError) as err:
        integrate_forward(drift, sigma, driver, [5.0], 5.0)
    assert 0.0 <= err.value.t_last < 5.0


def test_step_warning_flag():
    drift = make_drift("example_sec5", 1)
    grid = Grid.forward(0.1, 1e-2)
    driver = sample_wiener(grid, 1, seed=3)
    sigma = DiffusionMatrix.isotropic(1e-14, 1)
    run = integrate_forward(drift, sigma, driver, [6.0], 0.1, step_bound=0.05)
    assert run.step_warning


def test_driver_must_cover_horizon():
    drift = make_drift("linear", 1)
    grid = Grid.forward(1.0, 1e-2)
    driver = sample_wiener(grid, 1, seed=4)
    sigma = DiffusionMatrix.isotropic(1.0, 1)
    with pytest.raises(ContractViolationError):
        integrate_forward(drift, sigma, driver, [0.0], 2.0)


# --------------------------------------------------------------------------
# pullback


def test_pullback_zero_window_returns_x0():
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    driver = sample_fbm(Grid.two_sided(1.0, 0.0, 1e-2), 0.5, 2, seed=0)
    x0 = np.array([0.7, -0.2])
    assert np.array_equal(pullback_solve(drift, sigma, driver, x0, 0.0), x0)


def test_pullback_nesting_flow_property():
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(0.7, 2)
    driver = sample_fbm(Grid.two_sided(3.0, 0.0, 1e-2), 0.6, 2, seed=8)
    x0 = np.array([0.5, 0.5])
    full = pullback_solve(drift, sigma, driver, x0, 3.0)
    # run [-3, -1] first, then [-1, 0]
    incs = (driver.increments(-3.0, -1.0) @ sigma.sigma.T)[:, None, :]
    mid = heun_states(drift, incs, x0[None, :], 1e-2)["states"][0]
    incs2 = (driver.increments(-1.0, 0.0) @ sigma.sigma.T)[:, None, :]
    end = heun_states(drift, incs2, mid[None, :], 1e-2)["states"][0]
    assert np.array_equal(end, full)


def test_pullback_ou_matches_fou_endpoint():
    # oracle: the stationary linear response evaluated on the same driver
    drift = make_drift("linear", 2, rate=1.0)
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    dt = 1e-3
    driver = sample_fbm(Grid.two_sided(10.0, 0.0, dt), 0.5, 2, seed=11)
    fou = fou_evaluate(sigma, driver, 10.0)
    pb = pullback_solve(drift, sigma, driver, np.zeros(2), 10.0)
    assert np.linalg.norm(pb - fou.z0) < 10.0 * dt


def test_pullback_from_far_initials_survives_stiffness():
    # regression: explicit stepping from the 2 rho ball must not blow up
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    driver = sample_fbm(Grid.two_sided(2.0, 0.0, 1e-2), 0.5, 2, seed=12)
    far = np.array([[40.0, 0.0], [0.0, -55.0]])
    out = pullback_solve(drift, sigma, driver, far, 2.0)
    assert np.all(np.isfinite(out))
    assert np.linalg.norm(out, axis=1).max() < 10.0


# --------------------------------------------------------------------------
# linear response and absorbing radius


def test_fou_zero_driver_is_zero():
    from fracsync.paths import NoisePath, PathKind

    g = Grid.two_sided(2.0, 0.0, 0.01)
    zero = NoisePath(g, np.zeros((g.n, 2)), PathKind.WIENER, 0.5)
    fou = fou_evaluate(DiffusionMatrix.isotropic(1.0, 2), zero, 2.0)
    assert np.all(fou.values == 0.0)
    assert fou.truncation_bias == pytest.approx(math.exp(-2.0) * math.sqrt(3.0))


def test_fou_stationary_variance_classical():
    # H = 1/2: Var Z = sigma^2/2 per coordinate, over >= 4096 realizations
    d, per = 8, 512  # 8 coordinates x 512 drivers = 4096 independent values
    sigma = DiffusionMatrix.isotropic(1.0, d)
    dt, t_back = 0.01, 8.0
    g = Grid.two_sided(t_back, 0.0, dt)
    z0 = []
    for seed in range(per):
        driver = sample_fbm(g, 0.5, d, seed=seed)
        z0.append(fou_evaluate(sigma, driver, t_back).z0)
    z0 = np.concatenate(z0)
    var = z0 @ z0 / z0.size
    assert abs(var - 0.5) < 0.05 * 0.5


def test_absorbing_radius_zero_response_closed_form():
    from fracsync.paths import NoisePath, PathKind

    drift = make_drift("example_sec5", 2)
    g = Grid.two_sided(12.0, 0.0, 0.01)
    zero = NoisePath(g, np.zeros((g.n, 2)), PathKind.WIENER, 0.5)
    fou = fou_evaluate(DiffusionMatrix.isotropic(1.0, 2), zero, 12.0)
    rho = absorbing_radius(drift, fou)
    assert rho == pytest.approx(math.sqrt(c_bar_f(drift) / drift.constants.c2f), rel=1e-12)
    assert default_ball_radius(drift) == pytest.approx(rho, rel=1e-12)


def test_absorbing_radius_monotone_in_response():
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    driver = sample_fbm(Grid.two_sided(12.0, 0.0, 0.01), 0.5, 2, seed=3)
    fou = fou_evaluate(sigma, driver, 12.0)
    rho1 = absorbing_radius(drift, fou)
    bigger = type(fou)(
        times=fou.times, values=2.0 * fou.values, params=fou.params,
        sigma=fou.sigma, truncation_bias=fou.truncation_bias,
    )
    assert absorbing_radius(drift, bigger) > rho1


def test_absorbing_radius_truncation_stability():
    # doubling t_back changes rho by < 1% for the default configuration
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(0.5, 2)
    dt = 0.01
    driver = sample_fbm(Grid.two_sided(24.0, 0.0, dt), 0.5, 2, seed=21)
    fou_short = fou_evaluate(sigma, driver.restricted(-12.0, 0.0, reanchor=True), 12.0)
    fou_long = fou_evaluate(sigma, driver, 24.0)
    r1, r2 = absorbing_radius(drift, fou_short), absorbing_radius(drift, fou_long)
    assert abs(r2 - r1) < 0.01 * r1


# --------------------------------------------------------------------------
# pathwise contraction properties


def test_gronwall_two_point_bound():
    # |Phi^t x - Phi^t y|^2 <= exp(-c2f t)|x-y|^2 + c1f/c2f + eps_int
    drift = make_drift("example_sec5", 2)
    c = drift.constants
    sigma = DiffusionMatrix.isotropic(1.0, 2)
    dt = 1e-3
    eps_int = 10.0 * dt
    grid = Grid.forward(5.0, dt)
    rng = np.random.default_rng(31)
    driver = sample_fbm(grid, 0.5, 2, rng)
    noise = (driver.increments(0.0, 5.0) @ sigma.sigma.T)[:, None, :]
    xs = rng.uniform(-3, 3, size=(50, 2))
    ys = rng.uniform(-3, 3, size=(50, 2))
    out_x = heun_states(drift, noise, xs, dt, record=True)["trajectory"]
    out_y = heun_states(drift, noise, ys, dt, record=True)["trajectory"]
    d2 = np.sum((out_x - out_y) ** 2, axis=-1)
    times = np.arange(d2.shape[0]) * dt
    bound = np.exp(-c.c2f * times)[:, None] * d2[0][None, :] + c.c1f / c.c2f + eps_int
    assert np.all(d2 <= bound)


def test_conditional_one_step_contraction_rates():
    # outside the monotonicity ball the one-step squared distance contracts at
    # rate 2 c4f; everywhere it grows at most at rate 2 c3f
    drift = make_drift("example_sec5", 2)
    c = drift.constants
    dt = 1e-3
    eps = 10.0 * dt
    rng = np.random.default_rng(32)
    sigma = DiffusionMatrix.isotropic(0.5, 2)
    grid = Grid.forward(1.0, dt)
    driver = sample_fbm(grid, 0.5, 2, rng)
    noise = (driver.increments(0.0, 1.0) @ sigma.sigma.T)[:, None, :]
    xs = rng.uniform(-4, 4, size=(40, 2))
    ys = xs + 0.1 * rng.standard_normal((40, 2))
    tx = heun_states(drift, noise, xs, dt, record=True)["trajectory"]
    ty = heun_states(drift, noise, ys, dt, record=True)["trajectory"]
    d2 = np.sum((tx - ty) ** 2, axis=-1)  # (n+1, B)
    grow = math.exp(2.0 * c.c3f * dt) * (1.0 + eps)
    shrink = math.exp(-2.0 * c.c4f * dt) * (1.0 + eps)
    ratios = d2[1:] / np.maximum(d2[:-1], 1e-300)
    assert np.all(ratios <= grow)
    outside = (np.linalg.norm(tx, axis=-1) >= c.r_mono) & (
        np.linalg.norm(ty, axis=-1) >= c.r_mono
    )
    step_outside = outside[:-1] & outside[1:]
    assert np.all(ratios[step_outside] <= shrink)


def test_additive_difference_ignores_noise_intensity():
    # for linear drift the two-state difference never references the driver:
    # sigma = I and sigma = 2I give identical difference trajectories
    drift = make_drift("linear", 2, matrix=[[-1.0, 0.5], [-0.5, -1.0]])
    dt = 1e-3
    grid = Grid.forward(2.0, dt)
    driver = sample_fbm(grid, 0.5, 2, seed=44)
    x0 = np.array([[1.0, 0.0], [-1.0, 0.5]])
    diffs = []
    for kappa in (1.0, 2.0):
        sigma = DiffusionMatrix.isotropic(kappa, 2)
        noise = (driver.increments(0.0, 2.0) @ sigma.sigma.T)[:, None, :]
        traj = heun_states(drift, noise, x0, dt, record=True)["trajectory"]
        diffs.append(traj[:, 0, :] - traj[:, 1, :])
    assert np.allclose(diffs[0], diffs[1], atol=1e-9)


def test_unbounded_jacobian_warning_for_smooth_hurst():
    from fracsync.integrate import warn_if_unbounded_jacobian

    cubic = make_drift("example_sec5", 2)
    with pytest.warns(RuntimeWarning, match="unbounded drift Jacobian"):
        warn_if_unbounded_jacobian(cubic, 0.75)
    with pytest.raises(ContractViolationError):
        warn_if_unbounded_jacobian(cubic, 0.75, enforce=True)
    # rough side and bounded-derivative drifts are silent
    warn_if_unbounded_jacobian(cubic, 0.25)
    warn_if_unbounded_jacobian(make_drift("linear", 2), 0.75)


def test_jacobian_vs_finite_difference_order():
    # |DPhi v - (Phi(x+eps v)-Phi(x))/eps| = O(eps), observed order >= 0.9
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(0.5, 2)
    dt = 1e-3
    grid = Grid.forward(1.0, dt)
    driver = sample_fbm(grid, 0.5, 2, seed=13)
    x0 = np.array([0.6, -0.2])
    run = integrate_forward(drift, sigma, driver, x0, 1.0, with_jacobian=True)
    v = np.array([0.6, 0.8])
    jv = run.jacobians[-1] @ v
    errs = []
    epss = [1e-3, 1e-4, 1e-5]
    for eps in epss:
        pert = integrate_forward(drift, sigma, driver, x0 + eps * v, 1.0)
        fd = (pert.final_state - run.final_state) / eps
        errs.append(np.linalg.norm(jv - fd))
    orders = [
        math.log(errs[i] / errs[i + 1]) / math.log(epss[i] / epss[i + 1])
        for i in range(2)
    ]
    assert min(orders) >= 0.9
