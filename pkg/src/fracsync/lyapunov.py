"""Top Lyapunov exponent of the driven flow via the variational equation.

A random unit vector is propagated through the exact tangent of the discrete
step map after a stationarity burn-in, renormalized at a fixed interval; the
per-realization exponent is the accumulated log-norm divided by the sampled
time span.  A two-trajectory log-separation estimator with repeated rescaling
provides an independent cross-check of the variational route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drift import DiffusionMatrix, DriftModel
from .errors import ContractViolationError, EstimationError, RescaleFailureError
from .fbm import sample_fbm
from .integrate import default_ball_radius, heun_states, heun_states_with_tangent
from .paths import Grid
from .seeding import stream_rng

__all__ = [
    "LyapunovConfig",
    "LyapunovEstimate",
    "SweepResult",
    "estimate_lambda1",
    "lambda1_sigma_sweep",
    "fd_lyapunov_crosscheck",
]

# two-sided 99% normal quantile, used to flag sign-definite estimates
Z99 = 2.5758293035489004


@dataclass(frozen=True)
class LyapunovConfig:
    horizon: float
    n_realizations: int
    dt: float = 1e-3
    burn_in: float | None = None  # default: max(20, 5/c2f)
    renorm_interval: float = 1.0
    seed: int = 0
    max_drop_fraction: float = 0.2
    chunk: int = 32
    workers: int = 1

    def resolved_burn_in(self, drift: DriftModel) -> float:
        if self.burn_in is not None:
            return self.burn_in
        return max(20.0, 5.0 / drift.constants.c2f)


@dataclass
class LyapunovEstimate:
    lambda1: float
    stderr: float
    n_realizations: int
    burn_in: float
    horizon: float
    renorm_interval: float
    per_realization: list[float]
    n_dropped: int = 0
    diagnostics: dict = field(default_factory=dict)

    def ci99(self) -> tuple[float, float]:
        return (self.lambda1 - Z99 * self.stderr, self.lambda1 + Z99 * self.stderr)

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "stderr": self.stderr,
            "n_realizations": self.n_realizations,
            "burn_in": self.burn_in,
            "horizon": self.horizon,
            "renorm_interval": self.renorm_interval,
            "n_dropped": self.n_dropped,
            "per_realization": list(self.per_realization),
            "diagnostics": self.diagnostics,
        }


def _validate(config: LyapunovConfig, drift: DriftModel) -> tuple[float, int, int]:
    burn = config.resolved_burn_in(drift)
    if not burn < config.horizon:
        raise ContractViolationError(
            f"burn_in={burn} must be smaller than horizon={config.horizon}"
        )
    n_renorm = round(config.renorm_interval / config.dt)
    if n_renorm < 1 or abs(n_renorm * config.dt - config.renorm_interval) > 1e-9:
        raise ContractViolationError("renorm_interval must be a positive multiple of dt")
    # burn-in rounds up to a whole number of renormalization intervals so the
    # accumulated blocks tile the measured span exactly
    n_burn = math.ceil(round(burn / config.dt) / n_renorm) * n_renorm
    if n_burn >= round(config.horizon / config.dt):
        raise ContractViolationError("burn_in leaves no room for measurement")
    return n_burn * config.dt, n_burn, n_renorm


def _unit_vectors(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    v = rng.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _ball_points(rng: np.random.Generator, count: int, d: int, radius: float) -> np.ndarray:
    u = rng.standard_normal((count, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    return u * r[:, None]


def _lambda_chunk(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    h: float,
    config: LyapunovConfig,
    indices: range,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-realization exponents for one chunk; NaN marks dropped runs."""
    dt = config.dt
    burn, n_burn, n_renorm = _validate(config, drift)
    grid = Grid.forward(config.horizon, dt)
    n_steps = grid.n - 1
    d = drift.dim
    radius = default_ball_radius(drift)
    count = len(indices)
    noise = np.empty((n_steps, count, d))
    x0 = np.empty((count, d))
    v0 = np.empty((count, d))
    for j, idx in enumerate(indices):
        rng = stream_rng(config.seed, idx)
        driver = sample_fbm(grid, h, d, rng)
        noise[:, j, :] = driver.increments(0.0, config.horizon) @ sigma.sigma.T
        x0[j] = _ball_points(rng, 1, d, radius)[0]
        v0[j] = _unit_vectors(rng, 1, d)[0]
    # tangent runs from t=0 (renormalized, aligning); logs count after burn-in
    n_measure = ((n_steps - n_burn) // n_renorm) * n_renorm
    main = heun_states_with_tangent(
        drift,
        noise[: n_burn + n_measure],
        x0,
        v0,
        dt,
        renorm_every=n_renorm,
        accumulate_after=n_burn,
    )
    alive = main["alive"]
    lambdas = main["log_sum"] / (n_measure * dt)
    lambdas[~alive] = np.nan
    return lambdas, alive


def _collect(config: LyapunovConfig, worker) -> tuple[np.ndarray, int]:
    chunks = [
        range(start, min(start + config.chunk, config.n_realizations))
        for start in range(0, config.n_realizations, config.chunk)
    ]
    if config.workers > 1:
        from .parallel import run_chunked

        results = run_chunked(worker, chunks, config.workers)
    else:
        results = [worker(c) for c in chunks]
    lambdas = np.concatenate([r[0] for r in results])
    dropped = int(sum((~r[1]).sum() for r in results))
    return lambdas, dropped


def estimate_lambda1(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    h: float,
    config: LyapunovConfig,
) -> LyapunovEstimate:
    """Mean and standard error of the per-realization top exponents.

    Realizations that blow up during burn-in or measurement are dropped and
    counted; more than ``max_drop_fraction`` dropped raises EstimationError.
    """
    burn, _, _ = _validate(config, drift)

    def worker(indices):
        return _lambda_chunk(drift, sigma, h, config, indices)

    lambdas, dropped = _collect(config, worker)
    if dropped > config.max_drop_fraction * config.n_realizations:
        raise EstimationError(
            f"{dropped}/{config.n_realizations} realizations aborted (blow-up)"
        )
    kept = lambdas[np.isfinite(lambdas)]
    stderr = float(np.std(kept, ddof=1) / math.sqrt(len(kept))) if len(kept) > 1 else 0.0
    return LyapunovEstimate(
        lambda1=float(np.mean(kept)),
        stderr=stderr,
        n_realizations=len(kept),
        burn_in=burn,
        horizon=config.horizon,
        renorm_interval=config.renorm_interval,
        per_realization=[float(x) for x in kept],
        n_dropped=dropped,
        diagnostics={"hurst": h, "dt": config.dt, "seed": config.seed},
    )


@dataclass
class SweepResult:
    entries: list[tuple[float, LyapunovEstimate]]
    flagged_kappa: float | None  # smallest kappa whose 99% CI lies below 0

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"kappa": k, **est.to_dict()} for k, est in self.entries
            ],
            "flagged_kappa": self.flagged_kappa,
        }


def lambda1_sigma_sweep(
    drift: DriftModel,
    h: float,
    kappas: list[float],
    config: LyapunovConfig,
) -> SweepResult:
    """Estimate lambda1 with sigma = kappa I across an ascending kappa ladder."""
    if list(kappas) != sorted(kappas):
        raise ContractViolationError("kappas must be sorted ascending")
    entries = []
    flagged = None
    for i, kappa in enumerate(kappas):
        sigma = DiffusionMatrix.isotropic(kappa, drift.dim)
        est = estimate_lambda1(drift, sigma, h, replace(config, seed=config.seed + i))
        entries.append((float(kappa), est))
        if flagged is None and est.ci99()[1] < 0.0:
            flagged = float(kappa)
    return SweepResult(entries=entries, flagged_kappa=flagged)


def fd_lyapunov_crosscheck(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    h: float,
    config: LyapunovConfig,
    epsilon: float = 1e-5,
) -> LyapunovEstimate:
    """Two-trajectory log-separation estimate with repeated rescaling.

    The perturbed trajectory is pulled back to distance epsilon every
    renormalization interval; separations collapsing below 1e-14 raise
    RescaleFailureError.  Returned as a LyapunovEstimate so the agreement
    with the variational route can be tested at combined standard errors.
    """
    if not (1e-7 <= epsilon <= 1e-2):
        raise ContractViolationError("epsilon must lie in [1e-7, 1e-2]")
    dt = config.dt
    burn, n_burn, n_renorm = _validate(config, drift)
    grid = Grid.forward(config.horizon, dt)
    n_steps = grid.n - 1
    d = drift.dim
    radius = default_ball_radius(drift)
    per_real: list[float] = []
    dropped = 0
    for idx in range(config.n_realizations):
        rng = stream_rng(config.seed, idx)
        driver = sample_fbm(grid, h, d, rng)
        noise = (driver.increments(0.0, config.horizon) @ sigma.sigma.T)[:, None, :]
        x = _ball_points(rng, 1, d, radius)
        v0 = _unit_vectors(rng, 1, d)
        y = x + epsilon * v0
        n_measure = ((n_steps - n_burn) // n_renorm) * n_renorm
        log_sum = 0.0
        ok = True
        # the pair separates and rescales from t=0; blocks before burn-in
        # align the separation direction and are not counted
        for block in range((n_burn + n_measure) // n_renorm):
            lo = block * n_renorm
            seg = noise[lo : lo + n_renorm]
            pair = np.concatenate([x, y], axis=0)
            out = heun_states(drift, np.repeat(seg, 2, axis=1), pair, dt)
            if not out["alive"].all():
                ok = False
                break
            x, y = out["states"][:1], out["states"][1:]
            dist = float(np.linalg.norm(y - x))
            if dist < 1e-14:
                raise RescaleFailureError(
                    f"separation collapsed to {dist:.3e} at block {block}"
                )
            if lo >= n_burn:
                log_sum += math.log(dist / epsilon)
            y = x + (epsilon / dist) * (y - x)
        if not ok:
            dropped += 1
            continue
        per_real.append(log_sum / (n_measure * dt))
    if dropped > config.max_drop_fraction * config.n_realizations:
        raise EstimationError(f"{dropped}/{config.n_realizations} realizations aborted")
    arr = np.asarray(per_real)
    stderr = float(np.std(arr, ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return LyapunovEstimate(
        lambda1=float(arr.mean()),
        stderr=stderr,
        n_realizations=len(arr),
        burn_in=burn,
        horizon=config.horizon,
        renorm_interval=config.renorm_interval,
        per_realization=[float(x) for x in arr],
        n_dropped=dropped,
        diagnostics={"hurst": h, "dt": config.dt, "seed": config.seed, "epsilon": epsilon},
    )
