"""Step-size robustness of the headline statistics on the shipped config.

Halving dt must move the top-exponent estimate and the two-point decay rate
by less than 10%.  Both statistics carry Monte Carlo noise; the ensemble
sizes are chosen so that three combined standard errors sit well inside the
10% band (measured discretization bias at dt = 1e-3 is orders smaller).
"""

import numpy as np

from fracsync.drift import DiffusionMatrix, make_drift
from fracsync.lyapunov import LyapunovConfig, estimate_lambda1
from fracsync.synchronization import two_point_sync_ensemble

KAPPA_STAR = 0.5
HURST = 0.75


def test_lambda1_stable_under_dt_halving():
    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(KAPPA_STAR, 2)
    ests = []
    for dt in (1e-3, 5e-4):
        cfg = LyapunovConfig(horizon=100.0, n_realizations=48, dt=dt, seed=9)
        ests.append(estimate_lambda1(drift, sigma, HURST, cfg))
    a, b = ests
    assert abs(a.lambda1 - b.lambda1) < 0.10 * abs(a.lambda1), (
        f"dt halving moved lambda1 from {a.lambda1:.4f} to {b.lambda1:.4f}"
    )


def test_sync_acceptance_statistics_stable_under_dt_halving():
    # the acceptance statistics for weak synchronization: the fraction of
    # seeds with final R < 1e-3 R(0), and the attractor diameter criterion
    from fracsync.fbm import sample_fbm
    from fracsync.integrate import absorbing_radius, fou_evaluate
    from fracsync.paths import Grid
    from fracsync.seeding import stream_rng
    from fracsync.synchronization import attractor_diameter

    drift = make_drift("example_sec5", 2)
    sigma = DiffusionMatrix.isotropic(KAPPA_STAR, 2)
    initials = np.array([[1.5, 0.0], [-0.5, 0.3]])
    fractions, diam_pass = [], []
    for dt in (1e-3, 5e-4):
        out = two_point_sync_ensemble(
            drift, sigma, HURST, initials, 30.0, n_seeds=32, dt=dt, seed=10,
            record_stride=round(0.5 / dt),
        )
        fractions.append(out["pass_fraction_1e3"])
        t_back = 45.0  # deep enough that the 1e-3 criterion has margin
        driver = sample_fbm(Grid.two_sided(t_back, 0.0, dt), HURST, 2,
                            stream_rng(11, 0))
        fou = fou_evaluate(sigma, driver, t_back)
        rho = absorbing_radius(drift, fou)
        est = attractor_diameter(drift, sigma, driver, rho, 32, [t_back], seed=1)[0]
        diam_pass.append(est.diameter < 1e-3)
    assert abs(fractions[0] - fractions[1]) < 0.10
    assert diam_pass == [True, True]
