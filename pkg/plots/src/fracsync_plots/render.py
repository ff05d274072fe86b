"""Figure builders: deterministic matplotlib renderings of experiment outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schemas import SchemaError, load_csv, load_report

Z99 = 2.5758293035489004

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "fracsync-plots",  # stable element ids across runs
}


def render(kind: str, in_dir: str | Path, out_file: str | Path) -> None:
    in_dir = Path(in_dir)
    out_file = Path(out_file)
    builder = _BUILDERS.get(kind)
    if builder is None:
        raise SchemaError(f"unknown figure kind {kind!r}; known: {sorted(_BUILDERS)}")
    with plt.rc_context(_STYLE):
        fig = builder(in_dir)
        try:
            _save(fig, out_file)
        finally:
            plt.close(fig)


def _save(fig, out_file: Path) -> None:
    out_file.parent.mkdir(parents=True, exist_ok=True)
    suffix = out_file.suffix.lower()
    if suffix == ".svg":
        metadata = {"Date": None}  # strip the creation timestamp
    elif suffix == ".png":
        metadata = {"Software": "fracsync-plots"}
    else:
        raise SchemaError(f"unsupported output format {suffix!r} (use .png or .svg)")
    fig.savefig(out_file, metadata=metadata)


def _no_data(ax, message="no data"):
    ax.annotate(message, xy=(0.5, 0.5), xycoords="axes fraction",
                ha="center", va="center", fontsize=14, color="gray")


def _log_r_decay(in_dir: Path):
    series = load_csv(in_dir / "r_series.csv", ["t", "R"])
    report = load_report(in_dir, ["final_r", "decay_rate"])
    fig, ax = plt.subplots()
    t, r = series["t"], series["R"]
    positive = r > 0
    if positive.sum() == 0:
        _no_data(ax)
    else:
        ax.semilogy(t[positive], r[positive], lw=1.2, label="R(t)")
        rate = report.get("decay_rate")
        if rate is not None and np.isfinite(rate):
            t_fit = t[t >= t[-1] * 2.0 / 3.0]
            anchor_idx = np.argmax(t >= t_fit[0])
            anchor = max(r[anchor_idx], 1e-300)
            ax.semilogy(t_fit, anchor * np.exp(-rate * (t_fit - t_fit[0])), "--",
                        lw=1.0, label=f"fit rate {rate:.3g}")
        ax.legend(loc="upper right")
    ax.set_xlabel("t")
    ax.set_ylabel("R(t)")
    ax.set_title("two-point separation under common noise")
    return fig


def _lambda1_vs_kappa(in_dir: Path):
    table = load_csv(in_dir / "sweep.csv", ["kappa", "lambda1", "stderr"])
    fig, ax = plt.subplots()
    if table["kappa"].size == 0:
        _no_data(ax)
    else:
        ax.errorbar(table["kappa"], table["lambda1"], yerr=Z99 * table["stderr"],
                    fmt="o-", capsize=4, lw=1.2)
        ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("noise intensity kappa")
    ax.set_ylabel("top Lyapunov exponent")
    ax.set_title("lambda_1 vs kappa (99% CI)")
    return fig


def _atom_scatter(in_dir: Path):
    report = load_report(in_dir, ["centers", "weights", "p_hat"])
    centers = np.asarray(report["centers"], dtype=float)
    weights = np.asarray(report["weights"], dtype=float)
    fig, ax = plt.subplots()
    if centers.size == 0:
        _no_data(ax)
    else:
        if centers.ndim == 1:
            centers = centers[:, None]
        ys = centers[:, 1] if centers.shape[1] > 1 else np.zeros(len(centers))
        ax.scatter(centers[:, 0], ys, s=400.0 * weights + 20.0, alpha=0.8)
        for i, (x, y) in enumerate(zip(centers[:, 0], ys)):
            ax.annotate(f"b{i + 1}", (x, y), textcoords="offset points",
                        xytext=(6, 6), fontsize=9)
    ax.set_xlabel("x_1")
    ax.set_ylabel("x_2")
    ax.set_title(f"invariant-measure atoms (p = {report['p_hat']})")
    ax.set_aspect("equal", adjustable="datalim")
    return fig


def _attractor_diameter(in_dir: Path):
    table = load_csv(in_dir / "diameters.csv", ["t_back", "diameter"])
    fig, ax = plt.subplots()
    positive = table["diameter"] > 0
    if positive.sum() == 0:
        _no_data(ax)
    else:
        ax.semilogy(table["t_back"][positive], table["diameter"][positive],
                    "o-", lw=1.2)
    ax.set_xlabel("pullback window t_back")
    ax.set_ylabel("diameter of pullback image")
    ax.set_title("attractor diameter vs pullback depth")
    return fig


def _occupation_vs_v(in_dir: Path):
    table = load_csv(in_dir / "occupation.csv",
                     ["v", "occupation_mean", "occupation_max"])
    fig, ax = plt.subplots()
    if table["v"].size == 0:
        _no_data(ax)
    else:
        ax.loglog(table["v"], np.maximum(table["occupation_max"], 1e-300), "o-",
                  lw=1.2, label="worst initial")
        ax.loglog(table["v"], np.maximum(table["occupation_mean"], 1e-300), "s--",
                  lw=1.0, label="mean")
        ax.legend()
    ax.set_xlabel("control speed v")
    ax.set_ylabel("occupation time in critical ball")
    ax.set_title("push-out: occupation vs control speed")
    return fig


_BUILDERS = {
    "log-R-decay": _log_r_decay,
    "lambda1-vs-kappa": _lambda1_vs_kappa,
    "atom-scatter": _atom_scatter,
    "attractor-diameter": _attractor_diameter,
    "occupation-vs-v": _occupation_vs_v,
}
