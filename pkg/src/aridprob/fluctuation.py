"""Temporal fluctuation analysis of predicted class probabilities.

For each pixel the dominant class is the one with the highest mean
probability over a year range; the coefficient of variation (population
standard deviation over mean) of that class's probability series measures
how much the classification fluctuates, and is binned into five levels.
"""

import csv
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DomainError, UsageError, ValidationError
from .evaluation import argmax_classify_array
from .grid import GridSpec, save_rasters
from .ktc import MISSING_CLASS, AridityClass

PROB_SUM_TOL = 1e-12


class FluctuationLevel(IntEnum):
    VERY_LOW = 1
    LOW = 2
    MODERATE = 3
    HIGH = 4
    VERY_HIGH = 5


LEVEL_NAMES = {
    FluctuationLevel.VERY_LOW: "very_low",
    FluctuationLevel.LOW: "low",
    FluctuationLevel.MODERATE: "moderate",
    FluctuationLevel.HIGH: "high",
    FluctuationLevel.VERY_HIGH: "very_high",
}

# Closed upper bin edges; anything above the last edge is VERY_HIGH.
LEVEL_EDGES = (0.1, 0.2, 0.3, 0.4)

CLASS_PROB_NAMES = ("p_arid", "p_semiarid", "p_nonarid")


@dataclass(frozen=True)
class ProbCube:
    """Per (year, pixel) probability triples; NaN triples are missing."""

    spec: GridSpec
    years: tuple
    probs: np.ndarray  # (n_years, n_lat, n_lon, 3)

    def __post_init__(self):
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        probs = np.asarray(self.probs, dtype=np.float64)
        expected = (len(self.years), self.spec.n_lat, self.spec.n_lon, 3)
        if probs.shape != expected:
            raise ValidationError(f"probability cube must have shape {expected}")
        present = ~np.isnan(probs).any(axis=-1)
        if present.any():
            sums = probs[present].sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > PROB_SUM_TOL:
                raise ValidationError(
                    "probability triples must sum to 1 within "
                    f"{PROB_SUM_TOL} (worst off by {np.max(np.abs(sums - 1.0)):.3e})"
                )
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_rasters(cls, spec, years, cubes, renormalize=False) -> "ProbCube":
        """Assemble from per-class rasters keyed p_arid/p_semiarid/p_nonarid.

        ``renormalize`` divides each triple by its sum, for sources that
        round values (e.g. the CSV exchange format).
        """
        missing = [n for n in CLASS_PROB_NAMES if n not in cubes]
        if missing:
            raise ValidationError(f"probability rasters missing variables {missing}")
        probs = np.stack([cubes[n] for n in CLASS_PROB_NAMES], axis=-1)
        if renormalize:
            sums = probs.sum(axis=-1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                probs = np.where(sums > 0, probs / sums, np.nan)
        return cls(spec=spec, years=tuple(years), probs=probs)

    def select_years(self, years) -> "ProbCube":
        years = [int(y) for y in years]
        missing = [y for y in years if y not in self.years]
        if missing:
            raise UsageError(f"years {missing} not present in the probability cube")
        idx = [self.years.index(y) for y in years]
        return ProbCube(spec=self.spec, years=years, probs=self.probs[idx])


@dataclass(frozen=True)
class CVMap:
    spec: GridSpec
    dominant: np.ndarray  # int, 0 = missing
    cv: np.ndarray        # float, NaN = missing
    level: np.ndarray     # int, 0 = missing


@dataclass(frozen=True)
class RegionMask:
    """Axis-aligned surrogate for a country polygon."""

    name: str
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def pixel_mask(self, spec: GridSpec) -> np.ndarray:
        lat = spec.lat_centers()
        lon = spec.lon_centers()
        rows = (lat >= self.lat_min) & (lat <= self.lat_max)
        cols = (lon >= self.lon_min) & (lon <= self.lon_max)
        return rows[:, None] & cols[None, :]


# Bounding-box presets for the four highlighted transition-zone countries.
REGION_PRESETS = {
    "ethiopia": RegionMask("ethiopia", 3.0, 15.0, 33.0, 48.0),
    "morocco": RegionMask("morocco", 21.0, 36.0, -17.0, -1.0),
    "south_sudan": RegionMask("south_sudan", 3.0, 12.0, 24.0, 36.0),
    "iran": RegionMask("iran", 25.0, 40.0, 44.0, 63.0),
}


def mean_probs(cube: ProbCube) -> np.ndarray:
    """Per-pixel mean triple over available years; all-missing pixels stay NaN.

    Means of normalized triples already sum to 1, so no renormalization.
    """
    present = ~np.isnan(cube.probs).any(axis=-1)  # (n_years, n_lat, n_lon)
    counts = present.sum(axis=0)
    filled = np.where(present[..., None], cube.probs, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = filled.sum(axis=0) / counts[..., None]
    means[counts == 0] = np.nan
    return means


def dominant_class(mean_triple) -> AridityClass:
    """Argmax of a mean triple, ties toward the lowest class code."""
    triple = np.asarray(mean_triple, dtype=np.float64)
    if triple.shape != (3,):
        raise ValidationError("dominant_class expects a probability triple")
    return AridityClass(int(np.argmax(triple)) + 1)


def cv(series, sample: bool = False) -> float:
    """Standard deviation over mean of a probability series.

    Population (1/n) standard deviation by default, so a single-year series
    has cv = 0; ``sample`` switches to the 1/(n-1) form for sensitivity
    checks.  Returns NaN (undefined) when the mean is not positive.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise DomainError("cv of an empty series is undefined")
    mean = series.mean()
    if not mean > 0:
        return float("nan")
    if sample and series.size < 2:
        return float("nan")
    if np.ptp(series) == 0.0:
        return 0.0  # constant series: exactly zero, no mean-subtraction noise
    return float(series.std(ddof=1 if sample else 0) / mean)


def bin_cv(value: float) -> FluctuationLevel:
    """Five-level binning with closed upper edges at 0.1/0.2/0.3/0.4."""
    if value < 0:
        raise DomainError("cv must be >= 0")
    for edge, level in zip(LEVEL_EDGES, FluctuationLevel):
        if value <= edge:
            return level
    return FluctuationLevel.VERY_HIGH


def compute_cv_map(cube: ProbCube, sample: bool = False) -> CVMap:
    """Dominant class, CV of its probability series, and level per pixel."""
    means = mean_probs(cube)
    present = ~np.isnan(means).any(axis=-1)
    dominant = argmax_classify_array(means)

    picked = np.take_along_axis(
        cube.probs,
        np.broadcast_to(
            (np.where(dominant == MISSING_CLASS, 1, dominant) - 1)[None, :, :, None],
            cube.probs.shape[:3] + (1,),
        ).astype(int),
        axis=-1,
    )[..., 0]  # (n_years, n_lat, n_lon)

    year_present = ~np.isnan(picked)
    counts = year_present.sum(axis=0)
    filled = np.where(year_present, picked, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = filled.sum(axis=0) / counts
        dev = np.where(year_present, picked - mean, 0.0)
        denom = counts - 1 if sample else counts
        var = (dev**2).sum(axis=0) / denom
        cv_arr = np.sqrt(var) / mean
        lo = np.where(year_present, picked, np.inf).min(axis=0)
        hi = np.where(year_present, picked, -np.inf).max(axis=0)
    cv_arr = np.where(lo == hi, 0.0, cv_arr)  # constant series: exactly zero
    cv_arr = np.where(present & (mean > 0) & (counts > (1 if sample else 0)), cv_arr, np.nan)

    level = np.zeros(cv_arr.shape, dtype=np.int8)
    defined = ~np.isnan(cv_arr)
    lv = np.full(cv_arr.shape, int(FluctuationLevel.VERY_HIGH), dtype=np.int8)
    for edge, fl in zip(reversed(LEVEL_EDGES), reversed(list(FluctuationLevel)[:-1])):
        lv[cv_arr <= edge] = int(fl)
    level[defined] = lv[defined]
    dominant = np.where(present, dominant, MISSING_CLASS).astype(np.int8)
    return CVMap(spec=cube.spec, dominant=dominant, cv=cv_arr, level=level)


def area_proportions(cvmap: CVMap, latitude_weighted: bool = False) -> dict:
    """Percent of defined pixels per fluctuation level; sums to 100.

    Raw cell counts by default; ``latitude_weighted`` weights each cell by
    the cosine of its center latitude.
    """
    defined = cvmap.level != 0
    if not defined.any():
        raise UsageError("cv map has no defined pixels")
    if latitude_weighted:
        w = np.cos(np.radians(cvmap.spec.lat_centers()))[:, None]
        weights = np.broadcast_to(w, cvmap.level.shape)
    else:
        weights = np.ones(cvmap.level.shape)
    total = weights[defined].sum()
    out = {}
    for fl in FluctuationLevel:
        out[fl] = float(100.0 * weights[defined & (cvmap.level == int(fl))].sum() / total)
    return out


@dataclass(frozen=True)
class RegionSummary:
    region: str
    years: tuple
    by_year: np.ndarray  # (n_years, 3) mean triple per year
    overall: np.ndarray  # (3,) mean of the yearly means
    ratios: dict         # "non_arid:semi_arid" etc., None on zero denominators


def region_summary(cube: ProbCube, mask: RegionMask) -> RegionSummary:
    """Spatial mean probabilities inside a region, per year and overall."""
    pixels = mask.pixel_mask(cube.spec)
    if not pixels.any():
        raise UsageError(f"region {mask.name!r} does not intersect the grid")
    sub = cube.probs[:, pixels, :]  # (n_years, n_pixels, 3)
    present = ~np.isnan(sub).any(axis=-1)
    counts = present.sum(axis=1)
    filled = np.where(present[..., None], sub, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        by_year = filled.sum(axis=1) / counts[:, None]
    by_year[counts == 0] = np.nan

    with np.errstate(invalid="ignore"):
        overall = np.nanmean(by_year, axis=0)

    def ratio(a, b):
        if not np.isfinite(overall[a]) or not np.isfinite(overall[b]) or overall[b] == 0:
            return None
        return float(overall[a] / overall[b])

    ratios = {
        "non_arid:semi_arid": ratio(2, 1),
        "non_arid:arid": ratio(2, 0),
        "semi_arid:arid": ratio(1, 0),
    }
    return RegionSummary(
        region=mask.name, years=cube.years, by_year=by_year,
        overall=overall, ratios=ratios,
    )


def save_cv_map(cvmap: CVMap, years, path, format: str = "binary") -> None:
    """Export as rasters ``cv``, ``dominant``, ``level`` (single pseudo-year).

    The year list records the range the map was computed over.
    """
    year_tag = [int(years[0])]
    variables = {
        "cv": cvmap.cv[None],
        "dominant": np.where(
            cvmap.dominant == MISSING_CLASS, np.nan, cvmap.dominant.astype(float)
        )[None],
        "level": np.where(cvmap.level == 0, np.nan, cvmap.level.astype(float))[None],
    }
    save_rasters(path, cvmap.spec, year_tag, variables, format=format)


def save_proportions_csv(proportions: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "name", "cv_range", "area_pct"])
        ranges = ["cv <= 0.1", "0.1 < cv <= 0.2", "0.2 < cv <= 0.3",
                  "0.3 < cv <= 0.4", "cv > 0.4"]
        for fl, rng in zip(FluctuationLevel, ranges):
            writer.writerow([int(fl), LEVEL_NAMES[fl], rng, repr(proportions[fl])])


def save_region_summaries_csv(summaries, path) -> None:
    """CSV schema: region,year,p_arid,p_semiarid,p_nonarid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "year", "p_arid", "p_semiarid", "p_nonarid"])
        for s in summaries:
            for year, triple in zip(s.years, s.by_year):
                writer.writerow([s.region, year] + [repr(float(v)) for v in triple])
            writer.writerow([s.region, "overall"] + [repr(float(v)) for v in s.overall])
