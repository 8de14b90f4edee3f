"""Koeppen-Trewartha dry-climate labeling of annual pixel summaries.

Each pixel-year gets a three-way class from the mean annual temperature T
(degC), the annual precipitation total P (cm), and the winter share of
precipitation P_W (percent).  Winter is October-March of the same calendar
year, so every label depends on exactly one year of data.
"""

import logging
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import CoverageError, DomainError, SchemaError, ValidationError
from .grid import GridSpec, StGrid, load_rasters, save_rasters

log = logging.getLogger(__name__)

# Months whose precipitation counts as winter (same calendar year).
WINTER_MONTHS = (1, 2, 3, 10, 11, 12)

# Guard band for the P/R division and the stand-in value for |R| <= EPS_R.
EPS_R = 1e-9
PR_SENTINEL = 1e15


class AridityClass(IntEnum):
    ARID = 1
    SEMI_ARID = 2
    NON_ARID = 3


# Raster code for a missing label cell.
MISSING_CLASS = 0


@dataclass(frozen=True)
class AnnualSummary:
    """Per-pixel annual aggregates for one year; NaN cells are missing."""

    year: int
    t_mean: np.ndarray   # degC
    p_total: np.ndarray  # cm
    pw_pct: np.ndarray   # percent, 0..100


@dataclass(frozen=True)
class LabelRaster:
    """Classes (0 = missing) and unwinsorized P/R for one year."""

    spec: GridSpec
    year: int
    classes: np.ndarray  # int, values in {0, 1, 2, 3}
    pr: np.ndarray       # float, NaN = missing

    def __post_init__(self):
        shape = (self.spec.n_lat, self.spec.n_lon)
        if self.classes.shape != shape or self.pr.shape != shape:
            raise ValidationError(f"label raster arrays must have shape {shape}")


def aggregate_annual(grid: StGrid, year: int) -> AnnualSummary:
    """Aggregate one calendar year; any missing month makes a pixel missing."""
    precip = grid.year_planes("precip", year)  # (12, n_lat, n_lon)
    temp = grid.year_planes("temp", year)
    missing = np.isnan(precip).any(axis=0) | np.isnan(temp).any(axis=0)

    t_mean = temp.mean(axis=0)
    p_total = precip.sum(axis=0)
    winter = precip[[m - 1 for m in WINTER_MONTHS]].sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        pw_pct = np.where(p_total > 0, 100.0 * winter / p_total, 0.0)

    for arr in (t_mean, p_total, pw_pct):
        arr[missing] = np.nan
    return AnnualSummary(year=year, t_mean=t_mean, p_total=p_total, pw_pct=pw_pct)


def patton_threshold(t_mean, pw_pct):
    """Patton precipitation threshold R = 2.3 T - 0.64 P_W + 41, in cm.

    ``pw_pct`` is on the 0-100 percent scale.  Works elementwise on arrays.
    R can be negative for cold, winter-wet inputs.
    """
    return 2.3 * np.asarray(t_mean) - 0.64 * np.asarray(pw_pct) + 41.0


def classify(p: float, r: float) -> AridityClass:
    """Three-way dry-climate rule; total for every real R, including R <= 0."""
    if p < 0:
        raise DomainError("annual precipitation must be >= 0")
    if p < r / 2.0:
        return AridityClass.ARID
    if p < r:
        return AridityClass.SEMI_ARID
    return AridityClass.NON_ARID


def classify_array(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Vectorized classify; NaN inputs yield MISSING_CLASS."""
    p = np.asarray(p, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(p < 0):
        raise DomainError("annual precipitation must be >= 0")
    out = np.full(np.broadcast(p, r).shape, MISSING_CLASS, dtype=np.int8)
    with np.errstate(invalid="ignore"):
        out[p >= r] = AridityClass.NON_ARID
        out[(p >= r / 2.0) & (p < r)] = AridityClass.SEMI_ARID
        out[p < r / 2.0] = AridityClass.ARID
    out[np.isnan(p) | np.isnan(r)] = MISSING_CLASS
    return out


def pr_metric(p: float, r: float) -> float:
    """The continuous P/R covariate.

    Returns P/R when |R| > EPS_R, a signed sentinel when R is within the
    guard band but nonzero, and NaN (missing) when R is exactly zero.
    """
    if p < 0:
        raise DomainError("annual precipitation must be >= 0")
    if r == 0.0:
        return float("nan")
    if abs(r) <= EPS_R:
        return PR_SENTINEL if r > 0 else -PR_SENTINEL
    return p / r


def pr_metric_array(p: np.ndarray, r: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(p < 0):
        raise DomainError("annual precipitation must be >= 0")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(np.abs(r) > EPS_R, p / r, np.sign(r) * PR_SENTINEL)
    out = np.where(r == 0.0, np.nan, out)
    out = np.where(np.isnan(p) | np.isnan(r), np.nan, out)
    return out


def label_year(grid: StGrid, year: int) -> LabelRaster:
    summary = aggregate_annual(grid, year)
    r = patton_threshold(summary.t_mean, summary.pw_pct)
    classes = classify_array(summary.p_total, r)
    pr = pr_metric_array(summary.p_total, r)
    return LabelRaster(spec=grid.spec, year=year, classes=classes, pr=pr)


def label_grid(grid: StGrid, years) -> list:
    """Label every requested year; raises CoverageError for years off-grid."""
    years = list(years)
    missing_years = [y for y in years if y not in grid.spec.years()]
    if missing_years:
        raise CoverageError(
            f"years {missing_years} outside grid coverage "
            f"{grid.spec.year_start}..{grid.spec.year_end}"
        )
    return [label_year(grid, y) for y in years]


def labels_to_rasters(labels) -> tuple:
    """Pack label rasters into (spec, years, variables) for the grid formats.

    Classes export as variable ``label`` (float codes 1/2/3, NaN missing)
    and the P/R covariate as variable ``pr``.
    """
    if not labels:
        raise ValidationError("no label rasters to export")
    spec = labels[0].spec
    years = [lr.year for lr in labels]
    label_cube = np.stack(
        [np.where(lr.classes == MISSING_CLASS, np.nan, lr.classes.astype(float))
         for lr in labels]
    )
    pr_cube = np.stack([lr.pr for lr in labels])
    return spec, years, {"label": label_cube, "pr": pr_cube}


def save_labels(labels, path, format: str = "binary") -> None:
    spec, years, variables = labels_to_rasters(labels)
    save_rasters(path, spec, years, variables, format=format)


def load_labels(path, spec: GridSpec = None) -> list:
    spec_in, years, cubes = load_rasters(path, spec)
    if "label" not in cubes:
        raise SchemaError(f"{path}: no 'label' variable")
    pr = cubes.get("pr")
    labels = []
    for k, year in enumerate(years):
        plane = cubes["label"][k]
        classes = np.where(np.isnan(plane), MISSING_CLASS, plane).astype(np.int8)
        bad = ~np.isin(classes, (MISSING_CLASS, 1, 2, 3))
        if bad.any():
            raise SchemaError(f"{path}: label codes outside {{1, 2, 3}} in year {year}")
        pr_plane = pr[k] if pr is not None else np.full(plane.shape, np.nan)
        labels.append(LabelRaster(spec=spec_in, year=year, classes=classes, pr=pr_plane))
    return labels
