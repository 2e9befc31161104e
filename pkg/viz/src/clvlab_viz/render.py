"""The four figure kinds, drawn from artifact files alone."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import artifacts
from .jobs import PlotJob, SchemaError

DEFAULT_DPI = 120
DIVERGING_CMAP = "RdBu_r"  # low end blue, high end red


def diverging_mapping(values: np.ndarray):
    """Colormap and symmetric limits centered at zero for a statistic matrix.

    Negative values land in the blue half, positive in the red half.
    """
    finite = np.asarray(values)[np.isfinite(values)]
    vmax = float(np.max(np.abs(finite))) if finite.size else 1.0
    if vmax == 0.0:
        vmax = 1.0
    return plt.get_cmap(DIVERGING_CMAP), -vmax, vmax


def _finish(fig, job: PlotJob) -> Path:
    ax = fig.axes[0]
    if "xlabel" in job.style:
        ax.set_xlabel(job.style["xlabel"])
    if "ylabel" in job.style:
        ax.set_ylabel(job.style["ylabel"])
    if "title" in job.style:
        ax.set_title(job.style["title"])
    job.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(job.output, dpi=int(job.style.get("dpi", DEFAULT_DPI)))
    plt.close(fig)
    return job.output


def _render_colored_trajectory(job: PlotJob) -> Path:
    series = artifacts.read_columns(job.inputs["series"], ("t", "x1", "x2"))
    angles = artifacts.read_columns(job.inputs["angles"], ("t",))
    theta_col = artifacts.theta_column(angles, job.inputs["angles"])
    t = series["t"]
    tol = 0.5 * float(np.min(np.diff(t))) if len(t) > 1 else 1e-9
    idx = artifacts.align_by_time(t, angles["t"], tol)
    keep = (idx >= 0) & np.isfinite(angles[theta_col])
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.plot(series["x1"], series["x2"], color="0.85", lw=0.5, zorder=1)
    sc = ax.scatter(
        series["x1"][idx[keep]],
        series["x2"][idx[keep]],
        c=angles[theta_col][keep],
        s=6,
        cmap=job.style.get("cmap", "viridis"),
        vmin=0.0,
        vmax=1.0,
        zorder=2,
    )
    fig.colorbar(sc, ax=ax, label=theta_col)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    return _finish(fig, job)


def _render_heatmap(job: PlotJob) -> Path:
    row_label, rows, col_label, cols, matrix = artifacts.read_grid(job.inputs["grid"])
    cmap, vmin, vmax = diverging_mapping(matrix)
    fig, ax = plt.subplots(figsize=(6.0, 4.8))
    mesh = ax.pcolormesh(
        np.arange(len(cols)),
        np.arange(len(rows)),
        matrix,
        cmap=job.style.get("cmap", cmap),
        vmin=vmin,
        vmax=vmax,
        shading="nearest",
    )
    ax.set_xticks(np.arange(len(cols)), [f"{v:g}" for v in cols])
    ax.set_yticks(np.arange(len(rows)), [f"{v:g}" for v in rows])
    ax.set_xlabel(col_label)
    ax.set_ylabel(row_label)
    fig.colorbar(mesh, ax=ax)
    return _finish(fig, job)


def _render_lcurve(job: PlotJob) -> Path:
    curve = artifacts.read_columns(job.inputs["curve"], ("persistence", "loss"))
    order = np.argsort(curve["persistence"])
    p, loss = curve["persistence"][order], curve["loss"][order]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.semilogx(p, loss, marker="o")
    if "knee" in job.inputs:
        knee = artifacts.read_knee(job.inputs["knee"])
        if not knee.get("no_knee", False):
            ax.axvline(float(knee["p_star"]), color="crimson", ls="--", lw=1.0)
    ax.set_xlabel("persistence")
    ax.set_ylabel("loss")
    return _finish(fig, job)


def _render_series_overlay(job: PlotJob) -> Path:
    series = artifacts.read_columns(job.inputs["series"], ("t",))
    recon = artifacts.read_columns(job.inputs["reconstruction"], ("t",))
    labels = artifacts.read_columns(job.inputs["labels"], ("t", "label"))
    coords = artifacts.coordinate_columns(series, job.inputs["series"])
    rcoords = artifacts.coordinate_columns(recon, job.inputs["reconstruction"])
    shown = coords[: min(3, len(coords))]
    fig, (ax, strip) = plt.subplots(
        2, 1, figsize=(7.5, 4.6), sharex=True,
        height_ratios=(5, 1), constrained_layout=True,
    )
    for k, name in enumerate(shown):
        color = f"C{k}"
        ax.plot(series["t"], series[name], color=color, lw=0.9, label=name)
        if name in rcoords:
            ax.plot(recon["t"], recon[name], color=color, lw=0.9, ls="--", alpha=0.7)
    ax.legend(loc="upper right", fontsize=8)
    lab = labels["label"]
    strip.pcolormesh(
        labels["t"], [0, 1], lab[None, :-1],
        cmap="tab10", vmin=0, vmax=9, shading="flat",
    )
    strip.set_yticks([])
    strip.set_xlabel("t")
    return _finish(fig, job)


_RENDERERS = {
    "colored-trajectory": _render_colored_trajectory,
    "heatmap": _render_heatmap,
    "lcurve": _render_lcurve,
    "series-overlay": _render_series_overlay,
}


def render(job: PlotJob) -> Path:
    """Draw the requested figure; returns the written image path."""
    try:
        fn = _RENDERERS[job.kind]
    except KeyError:
        raise SchemaError(f"unknown kind {job.kind!r}") from None
    return fn(job)
