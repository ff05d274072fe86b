"""Command-line entry point: config in, machine-readable reports out.

Every invocation writes into its own directory named by subcommand and config
hash, so sweep campaigns never collide.  All output files are written
atomically (temp file + rename) and are byte-identical across reruns with the
same config; wall-clock metadata lives only in the sidecar meta.json.

Exit codes: 0 success, 1 validation/usage error, 2 runtime or integration
error, 3 no-acceptance (conditioned push-out found no driver in the tube).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    apply_override,
    config_hash,
    get_path,
    parse_config_file,
    serialize_config,
)
from .control import (
    PushoutSettings,
    conditioned_noise_pushout,
    occupation_sweep,
)
from .drift import DiffusionMatrix, make_drift
from .errors import (
    ContractViolationError,
    EstimationError,
    FbmGenerationError,
    IntegrationBlowupError,
    RescaleFailureError,
)
from .fbm import covariance_validation_report, sample_fbm
from .integrate import (
    absorbing_radius,
    fou_evaluate,
    integrate_forward,
    warn_if_unbounded_jacobian,
)
from .io import series_binary_bytes
from .lyapunov import LyapunovConfig, estimate_lambda1, lambda1_sigma_sweep
from .parallel import resolve_workers
from .paths import Grid
from .seeding import stream_rng
from .synchronization import (
    attractor_diameter,
    ball_points,
    clipped_sq_norm,
    ergodic_average_check,
    estimate_atoms,
    n_point_motion,
    two_point_sync_ensemble,
)

SUBCOMMANDS = (
    "simulate",
    "lyapunov",
    "sweep",
    "sync",
    "atoms",
    "attractor",
    "ergodic",
    "pushout",
    "validate-noise",
)


# --------------------------------------------------------------------------
# output plumbing


def _atomic_write(path: Path, data: str | bytes) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    with tempfile.NamedTemporaryFile(
        mode, dir=path.parent, prefix=path.name + ".", delete=False
    ) as tmp:
        tmp.write(data)
        tmp_path = Path(tmp.name)
    os.replace(tmp_path, path)


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


class _Invocation:
    def __init__(self, subcommand: str, config: dict):
        self.subcommand = subcommand
        self.config = config
        self.hash = config_hash(config)
        outdir = get_path(config, "run.outdir", "out")
        self.dir = Path(outdir) / f"{subcommand}-{self.hash[:12]}"
        self.dir.mkdir(parents=True, exist_ok=True)

    def report(self, payload: dict) -> None:
        payload = dict(payload)
        payload["config"] = self.config
        payload["version"] = __version__
        payload["subcommand"] = self.subcommand
        _write_json(self.dir / "report.json", payload)
        _write_json(
            self.dir / "meta.json",
            {"written_at": time.time(), "config_hash": self.hash},
        )
        _atomic_write(self.dir / "config.resolved", serialize_config(self.config))

    def csv(self, name: str, header: list[str], rows) -> None:
        _write_csv(self.dir / name, header, rows)


# --------------------------------------------------------------------------
# shared config extraction


def _build_drift(config: dict):
    name = get_path(config, "run.drift", required=True)
    dim = int(get_path(config, "run.dim", required=True))
    params = get_path(config, "drift_params", {}) or {}
    try:
        return make_drift(name, dim, **params)
    except TypeError as exc:
        raise ConfigError(f"bad drift_params for {name!r}: {exc}") from None


def _build_sigma(config: dict, dim: int) -> DiffusionMatrix:
    matrix = get_path(config, "sigma.matrix")
    if matrix is not None:
        return DiffusionMatrix.from_matrix(np.asarray(matrix, dtype=float))
    kappa = float(get_path(config, "sigma.kappa", 1.0))
    return DiffusionMatrix.isotropic(kappa, dim)


def _common(config: dict):
    drift = _build_drift(config)
    h = float(get_path(config, "run.hurst", 0.5))
    if not (0.0 < h < 1.0):
        raise ConfigError(f"run.hurst must lie in (0,1), got {h}")
    dt = float(get_path(config, "run.dt", 1e-3))
    if dt <= 0:
        raise ConfigError("run.dt must be positive")
    seed = int(get_path(config, "run.seed", 0))
    sigma = _build_sigma(config, drift.dim)
    enforce = bool(get_path(config, "run.enforce_bounded_jacobian", False))
    warn_if_unbounded_jacobian(drift, h, enforce=enforce)
    return drift, sigma, h, dt, seed


# --------------------------------------------------------------------------
# subcommand implementations


def _cmd_simulate(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    horizon = float(get_path(inv.config, "simulate.horizon", 10.0))
    x0 = np.asarray(get_path(inv.config, "simulate.x0", [0.0] * drift.dim), dtype=float)
    grid = Grid.forward(horizon, dt)
    driver = sample_fbm(grid, h, drift.dim, stream_rng(seed, 0))
    run = integrate_forward(drift, sigma, driver, x0, horizon)
    stride = max(int(get_path(inv.config, "simulate.record_stride", 1)), 1)
    times = run.times[::stride]
    states = run.states[::stride]
    inv.csv("trajectory.csv", ["t"] + [f"x_{j+1}" for j in range(drift.dim)],
            np.column_stack([times, states]))
    _atomic_write(inv.dir / "trajectory.fsnp", series_binary_bytes(times, states))
    inv.report({
        "final_state": run.final_state.tolist(),
        "horizon": horizon,
        "step_warning": run.step_warning,
    })
    return f"simulate: final |x| = {float(np.linalg.norm(run.final_state)):.4g}"


def _cmd_lyapunov(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    cfg = _lyapunov_config(inv.config, dt, seed)
    est = estimate_lambda1(drift, sigma, h, cfg)
    inv.csv("per_realization.csv", ["index", "lambda1"],
            [(i, v) for i, v in enumerate(est.per_realization)])
    inv.report(est.to_dict())
    return f"lyapunov: lambda1 = {est.lambda1:+.4f} +- {est.stderr:.4f}"


def _lyapunov_config(config: dict, dt: float, seed: int) -> LyapunovConfig:
    sect = get_path(config, "lyapunov", {}) or {}
    horizon = float(sect.get("horizon", 100.0))
    burn_in = sect.get("burn_in")
    cfg = LyapunovConfig(
        horizon=horizon,
        n_realizations=int(sect.get("n_realizations", 32)),
        dt=dt,
        burn_in=float(burn_in) if burn_in is not None else None,
        renorm_interval=float(sect.get("renorm_interval", 1.0)),
        seed=seed,
        workers=resolve_workers(get_path(config, "run.workers", 1)),
    )
    return cfg


def _cmd_sweep(inv: _Invocation) -> str:
    drift, _, h, dt, seed = _common(inv.config)
    kappas = [float(k) for k in get_path(inv.config, "sweep.kappas", required=True)]
    cfg = _lyapunov_config(inv.config, dt, seed)
    result = lambda1_sigma_sweep(drift, h, kappas, cfg)
    inv.csv("sweep.csv", ["kappa", "lambda1", "stderr"],
            [(k, e.lambda1, e.stderr) for k, e in result.entries])
    inv.report(result.to_dict())
    flag = result.flagged_kappa
    return f"sweep: flagged kappa* = {flag if flag is not None else 'none'}"


def _cmd_sync(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    horizon = float(get_path(inv.config, "sync.horizon", 50.0))
    initials = np.asarray(
        get_path(inv.config, "sync.initials", [[1.5] + [0.0] * (drift.dim - 1),
                                               [-0.5] + [0.0] * (drift.dim - 1)]),
        dtype=float,
    )
    stride = int(get_path(inv.config, "sync.record_stride", 50))
    grid = Grid.forward(horizon, dt)
    driver = sample_fbm(grid, h, drift.dim, stream_rng(seed, 0))
    report = n_point_motion(drift, sigma, driver, initials, horizon, record_stride=stride)
    inv.csv("r_series.csv", ["t", "R"], np.column_stack([report.times, report.r_values]))
    payload = report.to_dict()
    n_seeds = int(get_path(inv.config, "sync.n_seeds", 1))
    if n_seeds > 1:
        ens = two_point_sync_ensemble(
            drift, sigma, h, initials, horizon, n_seeds, dt=dt, seed=seed,
            record_stride=stride,
        )
        inv.csv("ensemble.csv", ["seed", "final_ratio", "decay_rate"],
                [(i, r, d) for i, (r, d) in
                 enumerate(zip(ens["final_ratios"], ens["decay_rates"]))])
        payload["ensemble"] = {
            "n_seeds": ens["n_seeds"],
            "pass_fraction_1e3": ens["pass_fraction_1e3"],
            "median_ratio": ens["median_ratio"],
            "n_blowups": ens["n_blowups"],
            "initial_r": ens["initial_r"],
        }
    inv.report(payload)
    return f"sync: final_r = {report.final_r:.3e} (R0 = {report.r_values[0]:.3g})"


def _two_sided_driver(drift, h, dt, seed, t_back, horizon=0.0):
    grid = Grid.two_sided(t_back, horizon, dt)
    return sample_fbm(grid, h, drift.dim, stream_rng(seed, 0))


def _cmd_atoms(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    t_back = float(get_path(inv.config, "atoms.t_back", 50.0))
    n_initials = int(get_path(inv.config, "atoms.n_initials", 128))
    cluster_radius = float(
        get_path(inv.config, "atoms.cluster_radius", 1e-3 * drift.constants.c_bound)
    )
    driver = _two_sided_driver(drift, h, dt, seed, t_back)
    fou = fou_evaluate(sigma, driver, t_back)
    rho = absorbing_radius(drift, fou)
    initials = ball_points(n_initials, drift.dim, 2.0 * rho, seed=seed)
    est = estimate_atoms(drift, sigma, driver, initials, t_back, cluster_radius)
    payload = est.to_dict()
    payload["absorbing_radius"] = rho
    inv.report(payload)
    return f"atoms: p_hat = {est.p_hat}, weights = {est.weights.tolist()}"


def _cmd_attractor(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    schedule = [float(t) for t in get_path(inv.config, "attractor.t_back_schedule",
                                           [0.0, 10.0, 25.0, 50.0])]
    n_initials = int(get_path(inv.config, "attractor.n_initials", 64))
    t_max = max(schedule)
    driver = _two_sided_driver(drift, h, dt, seed, t_max)
    fou = fou_evaluate(sigma, driver, t_max)
    rho = absorbing_radius(drift, fou)
    ball_radius = max(float(get_path(inv.config, "attractor.ball_radius", 0.0)), rho)
    ests = attractor_diameter(drift, sigma, driver, ball_radius, n_initials, schedule,
                              seed=seed)
    inv.csv("diameters.csv", ["t_back", "diameter"],
            [(e.t_back, e.diameter) for e in ests])
    inv.report({
        "estimates": [e.to_dict() for e in ests],
        "absorbing_radius": rho,
        "ball_radius": ball_radius,
    })
    return f"attractor: diameter at t_back={ests[-1].t_back:g} is {ests[-1].diameter:.3e}"


def _cmd_ergodic(inv: _Invocation) -> str:
    drift, sigma, h, dt, seed = _common(inv.config)
    horizon = float(get_path(inv.config, "ergodic.horizon", 20.0))
    n_real = int(get_path(inv.config, "ergodic.n_realizations", 64))
    cap = float(get_path(inv.config, "ergodic.clip", 25.0))
    x0 = np.asarray(get_path(inv.config, "ergodic.x0", [0.0] * drift.dim), dtype=float)
    out = ergodic_average_check(
        drift, sigma, h, clipped_sq_norm(cap), x0, horizon, n_real, dt=dt, seed=seed
    )
    inv.report(out)
    return (f"ergodic: time_avg = {out['time_avg']:.4f}, "
            f"ensemble_avg = {out['ensemble_avg']:.4f}, gap = {out['gap']:.4f}")


def _cmd_pushout(inv: _Invocation) -> int | str:
    drift, sigma, h, dt, seed = _common(inv.config)
    sect = get_path(inv.config, "pushout", {}) or {}
    settings = PushoutSettings.for_drift(drift, r2=sect.get("r2"))
    m_sup = settings.drift_sup(drift)
    horizon = float(sect.get("horizon", 0.01))
    dt_out = float(sect.get("dt_out", 1e-5))
    n_initials = int(sect.get("n_initials", 32))
    v_multiples = sect.get("v_multiples", [1.0, 10.0, 100.0, 1000.0])
    initials = ball_points(n_initials, drift.dim, settings.critical_radius, seed=seed)
    reports = occupation_sweep(
        drift, settings, [m * m_sup for m in v_multiples], initials, horizon, dt_out, m_sup
    )
    inv.csv("occupation.csv", ["v", "occupation_mean", "occupation_max", "kappa_bound"],
            [(r.v, r.occupation_time, r.worst_case_over_initials, r.kappa_bound)
             for r in reports])
    payload = {
        "controlled": [r.to_dict() for r in reports],
        "m_sup": m_sup,
        "r2": settings.r2,
        "critical_radius": settings.critical_radius,
        "conditioned": None,
    }
    delta = sect.get("delta")
    status = 0
    if delta is not None:
        cond = conditioned_noise_pushout(
            drift, sigma, h,
            v=float(sect.get("v", 2.0)),
            delta=float(delta),
            horizon=float(sect.get("cond_horizon", 1.0)),
            n_attempts=int(sect.get("n_attempts", 64)),
            seed=seed,
            dt=dt,
        )
        payload["conditioned"] = cond.to_dict()
        if cond.n_accepted == 0:
            status = 3
    inv.report(payload)
    top = reports[-1]
    msg = (f"pushout: top-v occupation max = {top.worst_case_over_initials:.2e} "
           f"of horizon {horizon:g}")
    if status:
        return status
    return msg


def _cmd_validate_noise(inv: _Invocation) -> str:
    sect = get_path(inv.config, "validate_noise", {}) or {}
    report = covariance_validation_report(
        h_values=tuple(float(x) for x in sect.get("h_values", [0.25, 0.5, 0.75])),
        n=int(sect.get("n", 4096)),
        n_paths=int(sect.get("n_paths", 4096)),
        max_lag=int(sect.get("max_lag", 10)),
        seed=int(get_path(inv.config, "run.seed", 2024)),
    )
    inv.report(report)
    if not report["passed"]:
        raise EstimationError("fGn covariance validation failed")
    worst = max(e["max_rel_error"] for e in report["h"].values())
    return f"validate-noise: passed, worst relative error {worst:.3%}"


_DISPATCH = {
    "simulate": _cmd_simulate,
    "lyapunov": _cmd_lyapunov,
    "sweep": _cmd_sweep,
    "sync": _cmd_sync,
    "atoms": _cmd_atoms,
    "attractor": _cmd_attractor,
    "ergodic": _cmd_ergodic,
    "pushout": _cmd_pushout,
    "validate-noise": _cmd_validate_noise,
}


# --------------------------------------------------------------------------
# entry point


def run(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(
        prog="fracsync",
        description="Synchronization-by-fractional-noise numerical laboratory",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="path to the experiment config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted-path config override (beats file values)",
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        config = parse_config_file(args.config)
        for assignment in args.overrides:
            apply_override(config, assignment)
        inv = _Invocation(args.subcommand, config)
        outcome = _DISPATCH[args.subcommand](inv)
    except (ConfigError, ContractViolationError) as exc:
        print(f"fracsync: validation error: {exc}", file=sys.stderr)
        return 1
    except (IntegrationBlowupError, EstimationError, RescaleFailureError,
            FbmGenerationError) as exc:
        print(f"fracsync: runtime error: {exc}", file=sys.stderr)
        return 2
    if isinstance(outcome, int):
        print(f"fracsync: {args.subcommand} -> {inv.dir} (no acceptance)")
        return outcome
    print(f"fracsync: {outcome} -> {inv.dir}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
