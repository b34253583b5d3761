"""Figure rendering.

Three kinds:
  trajectories - one panel per input run, one line per agent, line color
      blending gray (never actuated) to crimson (actuated every step)
  density      - one heatmap per input run: opinion histogram per MPC step,
      60 bins over [-3, 3]
  comparison   - one axes, population mean per input run, dashed target line

All inputs are parsed and validated before anything is written, so a bad
file never leaves a partial image behind. Rendering is deterministic: Agg
backend, fixed layout, and no date metadata in the output file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .trajfile import Trajectory, read_trajectory

# svg ids are derived from a hash salted with this instead of the process id
matplotlib.rcParams["svg.hashsalt"] = "opinion-steer-plots"

KINDS = ("trajectories", "density", "comparison")
DENSITY_BINS = 60
OPINION_RANGE = (-3.0, 3.0)

_PASSIVE_RGB = np.array([0.62, 0.62, 0.66])
_ACTIVE_RGB = np.array([0.86, 0.08, 0.24])


@dataclass(frozen=True)
class FigureRequest:
    inputs: tuple[Path, ...]
    kind: str
    out: Path
    target: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}: expected one of {', '.join(KINDS)}"
            )
        if not self.inputs:
            raise ValueError("no input files given")
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        object.__setattr__(self, "out", Path(self.out))


def render_figures(request: FigureRequest) -> Path:
    """Render one figure from the requested trajectory files; returns the
    output path. Raises before creating the file if any input is bad."""
    trajs = [read_trajectory(p) for p in request.inputs]
    if request.kind == "trajectories":
        fig = _trajectories_figure(trajs)
    elif request.kind == "density":
        fig = _density_figure(trajs)
    else:
        fig = _comparison_figure(trajs, request.target)
    try:
        request.out.parent.mkdir(parents=True, exist_ok=True)
        _save(fig, request.out)
    finally:
        plt.close(fig)
    return request.out


def density_matrix(states: np.ndarray) -> np.ndarray:
    """Histogram counts per step: (DENSITY_BINS, steps+1), row 0 at the
    low end of OPINION_RANGE. Opinions outside the range are dropped."""
    edges = np.linspace(*OPINION_RANGE, DENSITY_BINS + 1)
    out = np.empty((DENSITY_BINS, states.shape[0]), dtype=np.int64)
    for t in range(states.shape[0]):
        out[:, t] = np.histogram(states[t], bins=edges)[0]
    return out


def band_separation(hist: np.ndarray) -> bool:
    """True when a single-step histogram has mass on both sides of an empty
    middle third of the opinion range."""
    hist = np.asarray(hist)
    third = len(hist) // 3
    middle = hist[third : 2 * third]
    return middle.sum() == 0 and hist[:third].sum() > 0 and hist[2 * third :].sum() > 0


def mode_count(hist: np.ndarray) -> int:
    """Number of maximal runs of consecutive nonzero bins."""
    nonzero = np.flatnonzero(np.asarray(hist))
    if nonzero.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(nonzero) > 1))


def _panel_grid(n: int) -> tuple[plt.Figure, list[plt.Axes]]:
    ncols = min(3, n)
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False
    )
    flat = [ax for row in axes for ax in row]
    for ax in flat[n:]:
        ax.set_visible(False)
    return fig, flat[:n]


def _trajectories_figure(trajs: list[Trajectory]) -> plt.Figure:
    fig, axes = _panel_grid(len(trajs))
    for ax, traj in zip(axes, trajs):
        steps = np.arange(traj.n_steps + 1)
        frac = traj.actuated_fraction()
        # passive lines first so the actuated ones stay visible on top
        for i in np.argsort(frac, kind="stable"):
            color = _PASSIVE_RGB + frac[i] * (_ACTIVE_RGB - _PASSIVE_RGB)
            ax.plot(
                steps,
                traj.states[:, i],
                color=tuple(color),
                lw=0.5 + 0.5 * frac[i],
                alpha=0.7,
            )
        if traj.target is not None:
            ax.axhline(traj.target, color="black", ls="--", lw=0.8)
        ax.set_title(traj.label)
        ax.set_ylim(*OPINION_RANGE)
        ax.set_xlim(0, max(traj.n_steps, 1))
        ax.set_xlabel("MPC step")
        ax.set_ylabel("opinion")
    handles = [
        plt.Line2D([], [], color=tuple(_ACTIVE_RGB), lw=1.4, label="actuated"),
        plt.Line2D([], [], color=tuple(_PASSIVE_RGB), lw=1.0, label="passive"),
    ]
    axes[0].legend(handles=handles, loc="best", fontsize=8)
    fig.tight_layout()
    return fig


def _density_figure(trajs: list[Trajectory]) -> plt.Figure:
    fig, axes = _panel_grid(len(trajs))
    for ax, traj in zip(axes, trajs):
        counts = density_matrix(traj.states)
        ax.imshow(
            counts,
            origin="lower",
            aspect="auto",
            extent=(-0.5, traj.n_steps + 0.5, *OPINION_RANGE),
            cmap="magma",
            interpolation="nearest",
        )
        ax.set_title(traj.label)
        ax.set_xlabel("MPC step")
        ax.set_ylabel("opinion")
    fig.tight_layout()
    return fig


def _comparison_figure(trajs: list[Trajectory], target: float | None) -> plt.Figure:
    if target is None:
        found = sorted({t.target for t in trajs if t.target is not None})
        if not found:
            raise ValueError(
                "no target value: no input has a readable sidecar summary; "
                "pass --target"
            )
        if len(found) > 1:
            raise ValueError(
                f"inputs disagree on the target value ({found}); pass --target"
            )
        target = found[0]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for traj in trajs:
        ax.plot(
            np.arange(traj.n_steps + 1),
            traj.states.mean(axis=1),
            lw=1.6,
            label=traj.label,
        )
    ax.axhline(target, color="black", ls="--", lw=1.0, label="target")
    ax.set_xlabel("MPC step")
    ax.set_ylabel("population mean opinion")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def _save(fig: plt.Figure, out: Path) -> None:
    # matplotlib stamps a creation date into svg and pdf output; strip it so
    # identical inputs give identical bytes
    metadata = {".svg": {"Date": None}, ".pdf": {"CreationDate": None}}.get(
        out.suffix.lower()
    )
    if metadata is None:
        fig.savefig(out, dpi=150)
    else:
        fig.savefig(out, dpi=150, metadata=metadata)
