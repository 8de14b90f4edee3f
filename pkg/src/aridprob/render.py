"""Raster rendering to PNG plus the report figures.

Rasters render as exact-pixel images (integer upscaling only, north up)
with a JSON legend sidecar; probability ramps are fixed to [0, 1] and the
P/R ramp to the winsorization bounds [0.001, 2] so images are comparable
across runs.  Report figures (metric time series, loss history, CV map)
are ordinary matplotlib figures.
"""

import json
from dataclasses import dataclass

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib import colormaps

from .errors import ValidationError
from .fluctuation import LEVEL_NAMES, FluctuationLevel
from .grid import winsorize
from .ktc import AridityClass

# Fixed discrete palette: arid warm, semi-arid intermediate, non-arid cool.
CLASS_COLORS = {
    int(AridityClass.ARID): (0.835, 0.369, 0.000),
    int(AridityClass.SEMI_ARID): (0.941, 0.894, 0.259),
    int(AridityClass.NON_ARID): (0.216, 0.494, 0.722),
}
CLASS_LABELS = {1: "arid", 2: "semi_arid", 3: "non_arid"}
MISSING_COLOR = (0.62, 0.62, 0.62)

LEVEL_COLORS = {
    int(fl): tuple(c)
    for fl, c in zip(
        FluctuationLevel,
        colormaps["YlOrRd"](np.linspace(0.1, 0.95, 5))[:, :3].tolist(),
    )
}

PR_WINSOR_BOUNDS = (0.001, 2.0)
CV_RENDER_RANGE = (0.0, 0.5)

# variable -> ("discrete"|"continuous", fixed value range or code->color map)
VARIABLE_KINDS = {
    "class": ("discrete", CLASS_COLORS),
    "prob_arid": ("continuous", (0.0, 1.0)),
    "prob_semiarid": ("continuous", (0.0, 1.0)),
    "prob_nonarid": ("continuous", (0.0, 1.0)),
    "pr_winsorized": ("continuous", PR_WINSOR_BOUNDS),
    "cv": ("continuous", CV_RENDER_RANGE),
    "level": ("discrete", LEVEL_COLORS),
}


@dataclass(frozen=True)
class RenderSpec:
    variable: str
    palette: str = "viridis"
    scale: int = 1

    def __post_init__(self):
        if self.variable not in VARIABLE_KINDS:
            raise ValidationError(
                f"unknown render variable {self.variable!r}; "
                f"choose from {sorted(VARIABLE_KINDS)}"
            )
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValidationError("render scale must be an integer >= 1")
        if VARIABLE_KINDS[self.variable][0] == "continuous":
            if self.palette not in colormaps:
                raise ValidationError(f"unknown palette {self.palette!r}")


def render_raster(values: np.ndarray, rspec: RenderSpec) -> np.ndarray:
    """RGB image of a raster plane, row 0 at the top (north up)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValidationError("render input must be a 2-D raster")
    kind, meta = VARIABLE_KINDS[rspec.variable]
    flipped = values[::-1]
    missing = np.isnan(flipped)

    rgb = np.empty(flipped.shape + (3,), dtype=np.float64)
    if kind == "discrete":
        rgb[:] = MISSING_COLOR
        for code, color in meta.items():
            rgb[flipped == code] = color
        missing |= ~np.isin(np.nan_to_num(flipped, nan=-1), list(meta))
    else:
        lo, hi = meta
        if rspec.variable == "pr_winsorized":
            clipped = winsorize(np.where(missing, lo, flipped), lo, hi)
        else:
            clipped = np.clip(np.where(missing, lo, flipped), lo, hi)
        norm = (clipped - lo) / (hi - lo)
        rgb[:] = colormaps[rspec.palette](norm)[..., :3]
    rgb[missing] = MISSING_COLOR

    if rspec.scale > 1:
        rgb = np.kron(rgb, np.ones((rspec.scale, rspec.scale, 1)))
    return rgb


def legend_metadata(rspec: RenderSpec, grid_shape) -> dict:
    kind, meta = VARIABLE_KINDS[rspec.variable]
    legend = {
        "variable": rspec.variable,
        "kind": kind,
        "scale": int(rspec.scale),
        "grid_shape": [int(grid_shape[0]), int(grid_shape[1])],
        "image_shape": [int(grid_shape[0] * rspec.scale), int(grid_shape[1] * rspec.scale)],
        "orientation": "row 0 of the image is the northernmost grid row",
        "missing_color": list(MISSING_COLOR),
    }
    if kind == "discrete":
        names = CLASS_LABELS if rspec.variable == "class" else {
            int(fl): LEVEL_NAMES[fl] for fl in FluctuationLevel
        }
        legend["classes"] = {
            str(code): {"name": names[code], "color": list(color)}
            for code, color in meta.items()
        }
    else:
        legend["palette"] = rspec.palette
        legend["value_range"] = list(meta)
    return legend


def save_render(values: np.ndarray, rspec: RenderSpec, path) -> None:
    """Write the PNG and a <path>.json legend sidecar."""
    rgb = render_raster(values, rspec)
    plt.imsave(path, rgb)
    with open(str(path) + ".json", "w") as fh:
        json.dump(legend_metadata(rspec, values.shape), fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_metric_timeseries(report, path) -> None:
    """Precision / recall / F1 per class over the evaluated years."""
    years = sorted({r.year for r in report.rows})
    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    for ax, metric in zip(axes, ("precision", "recall", "f1")):
        for cls in AridityClass:
            series = []
            for y in years:
                row = report.row(cls, y)
                v = getattr(row, metric)
                series.append(np.nan if v is None else v)
            ax.plot(years, series, marker="o", markersize=3,
                    color=CLASS_COLORS[int(cls)], label=CLASS_LABELS[int(cls)])
        ax.set_ylabel(metric)
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, alpha=0.3)
    axes[0].legend(loc="lower left", ncol=3)
    axes[-1].set_xlabel("year")
    fig.suptitle("classification metrics by year")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_loss_history(history, path) -> None:
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [h["train_loss"] for h in history], label="train")
    if any(h["val_loss"] is not None for h in history):
        ax.plot(
            epochs,
            [np.nan if h["val_loss"] is None else h["val_loss"] for h in history],
            label="validation",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean cross-entropy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_cv_map(cvmap, path, title="coefficient of variation") -> None:
    fig, ax = plt.subplots(figsize=(8, 5))
    lo, hi = CV_RENDER_RANGE
    img = ax.imshow(
        cvmap.cv[::-1], cmap="viridis", vmin=lo, vmax=hi,
        extent=(cvmap.spec.lon_min, cvmap.spec.lon_max,
                cvmap.spec.lat_min, cvmap.spec.lat_max),
    )
    fig.colorbar(img, ax=ax, label="cv")
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
