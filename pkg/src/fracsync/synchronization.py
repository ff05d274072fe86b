"""N-point motions under common noise, atom clustering, attractor sampling.

Under one realized driver, trajectories from different initial conditions are
integrated together; the synchronization statistic R(t) is the maximal
pairwise distance.  Endpoints of deep pullback runs are clustered by single
linkage into the atoms of the disintegrated invariant measure, whose pairwise
distances obey the deterministic bound c1f/c2f.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .drift import DiffusionMatrix, DriftModel
from .errors import ContractViolationError
from .fbm import sample_fbm
from .integrate import heun_states, pullback_solve
from .paths import Grid, NoisePath
from .seeding import stream_rng

__all__ = [
    "SyncReport",
    "AtomEstimate",
    "AttractorEstimate",
    "n_point_motion",
    "estimate_atoms",
    "attractor_diameter",
    "ergodic_average_check",
    "ball_points",
    "clipped_sq_norm",
]

_R_FLOOR = 1e-12  # below this the decay fit makes no claim


@dataclass
class SyncReport:
    times: np.ndarray
    r_values: np.ndarray
    decay_rate: float
    decay_r2: float
    final_r: float
    n_points: int
    c_bound: float
    blow_up: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def r_series(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.r_values.tolist()))

    def to_dict(self) -> dict:
        return {
            "decay_rate": self.decay_rate,
            "decay_r2": self.decay_r2,
            "final_r": self.final_r,
            "initial_r": float(self.r_values[0]),
            "n_points": self.n_points,
            "c_bound": self.c_bound,
            "blow_up": self.blow_up,
            "n_nodes": int(len(self.times)),
        }


@dataclass
class AtomEstimate:
    centers: np.ndarray  # (p, d)
    weights: np.ndarray  # (p,)
    p_hat: int
    cluster_radius: float
    ambiguous: bool = False

    def max_center_distance(self) -> float:
        if self.p_hat < 2:
            return 0.0
        diff = self.centers[:, None, :] - self.centers[None, :, :]
        return float(np.linalg.norm(diff, axis=-1).max())

    def to_dict(self) -> dict:
        return {
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "p_hat": self.p_hat,
            "cluster_radius": self.cluster_radius,
            "ambiguous": self.ambiguous,
            "max_center_distance": self.max_center_distance(),
        }


@dataclass
class AttractorEstimate:
    sample_points: np.ndarray  # (n, d)
    diameter: float
    t_back: float
    n_initials: int

    def to_dict(self) -> dict:
        return {
            "diameter": self.diameter,
            "t_back": self.t_back,
            "n_initials": self.n_initials,
        }


# --------------------------------------------------------------------------
# helpers


def ball_points(n: int, d: int, radius: float, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points in the ball of given radius (Sobol mapped)."""
    sampler = qmc.Sobol(d=d + 1, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # balance requires powers of two; the spread is still what we need
        warnings.simplefilter("ignore", UserWarning)
        u = sampler.random(n)
    direction = _normalize_rows(2.0 * u[:, :d] - 1.0)
    r = radius * u[:, d] ** (1.0 / d)
    return direction * r[:, None]


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return x / norms


def _max_pairwise(states: np.ndarray) -> np.ndarray:
    """Max pairwise distance per leading index; states (..., p, d)."""
    diff = states[..., :, None, :] - states[..., None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)).max(axis=(-2, -1))


def clipped_sq_norm(cap: float = 25.0):
    """Bounded-Lipschitz test function min(|x|^2, cap)."""

    def fn(x: np.ndarray) -> np.ndarray:
        return np.minimum(np.sum(np.asarray(x) ** 2, axis=-1), cap)

    fn.bound = cap
    fn.lipschitz = 2.0 * math.sqrt(cap)
    return fn


# --------------------------------------------------------------------------
# operations


def n_point_motion(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    driver: NoisePath,
    initials: np.ndarray,
    horizon: float,
    record_stride: int = 1,
) -> SyncReport:
    """Integrate all initials under the same driver and track R(t).

    The exponential decay rate is fitted on log R over the final third of the
    horizon (truncated where R underflows); blow-up of any trajectory aborts
    with a partial, flagged report.
    """
    initials = np.atleast_2d(np.asarray(initials, dtype=np.float64))
    if initials.shape[0] < 2:
        raise ContractViolationError("n_point_motion needs at least two initials")
    dt = driver.grid.dt
    noise = (driver.increments(0.0, horizon) @ sigma.sigma.T)[:, None, :]
    n_steps = noise.shape[0]
    stride = max(int(record_stride), 1)
    rec_idx = [0]
    r_vals = [float(_max_pairwise(initials))]
    x = initials.copy()
    blow_up = False
    for start in range(0, n_steps, stride):
        seg = noise[start : start + stride]
        out = heun_states(drift, seg, x, dt)
        x = out["states"]
        if not out["alive"].all():
            blow_up = True
            break
        rec_idx.append(min(start + stride, n_steps))
        r_vals.append(float(_max_pairwise(x)))
    times = np.asarray(rec_idx, dtype=np.float64) * dt
    r_values = np.asarray(r_vals)
    decay_rate, r2 = _fit_decay(times, r_values)
    return SyncReport(
        times=times,
        r_values=r_values,
        decay_rate=decay_rate,
        decay_r2=r2,
        final_r=float(r_values[-1]),
        n_points=initials.shape[0],
        c_bound=drift.constants.c_bound,
        blow_up=blow_up,
    )


def _fit_decay(times: np.ndarray, r_values: np.ndarray) -> tuple[float, float]:
    """Least squares of log R ~ a - rate * t over the final third, R above floor."""
    cutoff = times[-1] * (2.0 / 3.0)
    mask = (times >= cutoff) & (r_values > _R_FLOOR)
    if mask.sum() < 3:
        return float("nan"), float("nan")
    t, y = times[mask], np.log(r_values[mask])
    a = np.vstack([np.ones_like(t), -t]).T
    coef, residual, *_ = np.linalg.lstsq(a, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(residual[0]) if residual.size else float(np.sum((y - a @ coef) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[1]), r2


def two_point_sync_ensemble(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    h: float,
    initials: np.ndarray,
    horizon: float,
    n_seeds: int,
    dt: float = 1e-3,
    seed: int = 0,
    record_stride: int = 50,
    chunk: int = 16,
) -> dict:
    """final R / initial R across independent drivers, integration batched.

    Each seed gets its own driver (all initials share it); returns per-seed
    final ratios plus the fraction below common thresholds.
    """
    initials = np.atleast_2d(np.asarray(initials, dtype=np.float64))
    p = initials.shape[0]
    grid = Grid.forward(horizon, dt)
    n_steps = grid.n - 1
    stride = max(int(record_stride), 1)
    r0 = float(_max_pairwise(initials))
    finals = np.empty(n_seeds)
    decay_rates = np.empty(n_seeds)
    blow_ups = 0
    for start in range(0, n_seeds, chunk):
        ids = range(start, min(start + chunk, n_seeds))
        c = len(ids)
        noise = np.empty((n_steps, c * p, drift.dim))
        for j, idx in enumerate(ids):
            rng = stream_rng(seed, idx)
            driver = sample_fbm(grid, h, drift.dim, rng)
            incs = driver.increments(0.0, horizon) @ sigma.sigma.T
            noise[:, j * p : (j + 1) * p, :] = incs[:, None, :]
        x = np.tile(initials, (c, 1))
        rec_t = [0.0]
        rec_r = [np.full(c, r0)]
        for s0 in range(0, n_steps, stride):
            out = heun_states(drift, noise[s0 : s0 + stride], x, dt)
            x = out["states"]
            rec_t.append(min(s0 + stride, n_steps) * dt)
            rec_r.append(_max_pairwise(x.reshape(c, p, -1)))
        r_mat = np.stack(rec_r, axis=0)  # (n_rec, c)
        times = np.asarray(rec_t)
        for j, idx in enumerate(ids):
            series = r_mat[:, j]
            if not np.all(np.isfinite(series)):
                blow_ups += 1
                finals[idx] = np.nan
                decay_rates[idx] = np.nan
                continue
            finals[idx] = series[-1]
            decay_rates[idx] = _fit_decay(times, series)[0]
    ratios = finals / r0
    ok = np.isfinite(ratios)
    return {
        "initial_r": r0,
        "final_ratios": ratios,
        "decay_rates": decay_rates,
        "n_seeds": n_seeds,
        "n_blowups": blow_ups,
        "pass_fraction_1e3": float(np.mean(ratios[ok] < 1e-3)) if ok.any() else 0.0,
        "median_ratio": float(np.nanmedian(ratios)) if ok.any() else float("nan"),
    }


def estimate_atoms(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    two_sided_driver: NoisePath,
    initials: np.ndarray,
    t_back: float,
    cluster_radius: float,
) -> AtomEstimate:
    """Cluster pullback endpoints by single linkage at ``cluster_radius``.

    Cluster centers estimate the atoms of the disintegrated measure; the
    ambiguity flag is set when two centers approach within twice the radius.
    """
    initials = np.atleast_2d(np.asarray(initials, dtype=np.float64))
    endpoints = pullback_solve(drift, sigma, two_sided_driver, initials, t_back)
    return cluster_atoms(endpoints, cluster_radius)


def cluster_atoms(endpoints: np.ndarray, cluster_radius: float) -> AtomEstimate:
    tree = cKDTree(endpoints)
    pairs = tree.query_pairs(r=cluster_radius, output_type="ndarray")
    n = endpoints.shape[0]
    if pairs.size:
        ones = np.ones(len(pairs), dtype=np.int8)
        adj = csr_matrix((ones, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    else:
        adj = csr_matrix((n, n), dtype=np.int8)
    p_hat, labels = connected_components(adj, directed=False)
    centers = np.stack([endpoints[labels == i].mean(axis=0) for i in range(p_hat)])
    weights = np.bincount(labels, minlength=p_hat) / n
    ambiguous = False
    if p_hat > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dists = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dists, np.inf)
        ambiguous = bool(dists.min() < 2.0 * cluster_radius)
    return AtomEstimate(
        centers=centers,
        weights=weights.astype(np.float64),
        p_hat=int(p_hat),
        cluster_radius=float(cluster_radius),
        ambiguous=ambiguous,
    )


def attractor_diameter(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    two_sided_driver: NoisePath,
    ball_radius: float,
    n_initials: int,
    t_back_schedule: list[float],
    seed: int = 0,
) -> list[AttractorEstimate]:
    """Pullback images of a low-discrepancy ball across nested time windows.

    All windows reuse segments of the same driver (fixed noise past), matching
    the pullback definition and avoiding fresh sampling per window.
    """
    initials = ball_points(n_initials, drift.dim, ball_radius, seed=seed)
    out = []
    for t_back in t_back_schedule:
        if t_back == 0.0:
            points = initials
        else:
            points = pullback_solve(drift, sigma, two_sided_driver, initials, t_back)
        out.append(
            AttractorEstimate(
                sample_points=points,
                diameter=float(_max_pairwise(points)),
                t_back=float(t_back),
                n_initials=n_initials,
            )
        )
    return out


def ergodic_average_check(
    drift: DriftModel,
    sigma: DiffusionMatrix,
    h: float,
    test_fn,
    x0: np.ndarray,
    horizon: float,
    n_realizations: int,
    dt: float = 1e-3,
    seed: int = 0,
) -> dict:
    """Time average along forward runs vs ensemble average of pullback points.

    The caller asserts test_fn is bounded Lipschitz.  Per realization one
    two-sided driver supplies both the forward segment [0, horizon] and the
    pullback segment [-horizon, 0]; both runs start from x0.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    grid = Grid.two_sided(horizon, horizon, dt)
    time_avgs = np.empty(n_realizations)
    pullback_vals = np.empty(n_realizations)
    for idx in range(n_realizations):
        rng = stream_rng(seed, idx)
        driver = sample_fbm(grid, h, drift.dim, rng)
        fwd_noise = (driver.increments(0.0, horizon) @ sigma.sigma.T)[:, None, :]
        out = heun_states(drift, fwd_noise, x0[None, :], dt, record=True)
        traj = out["trajectory"][:, 0, :]
        time_avgs[idx] = float(np.mean(test_fn(traj)))
        endpoint = pullback_solve(drift, sigma, driver, x0, horizon)
        pullback_vals[idx] = float(test_fn(endpoint))
    time_avg = float(time_avgs.mean())
    ensemble_avg = float(pullback_vals.mean())
    return {
        "time_avg": time_avg,
        "ensemble_avg": ensemble_avg,
        "gap": abs(time_avg - ensemble_avg),
        "time_avg_stderr": float(np.std(time_avgs, ddof=1) / math.sqrt(n_realizations))
        if n_realizations > 1
        else 0.0,
        "ensemble_avg_stderr": float(np.std(pullback_vals, ddof=1) / math.sqrt(n_realizations))
        if n_realizations > 1
        else 0.0,
        "n_realizations": n_realizations,
        "horizon": horizon,
    }
