"""Wendland spatial and Gaussian temporal basis features.

The stacked input vector for a pixel-year is (covariates, k spatial basis
values, r temporal basis values).  Distances are planar Euclidean in
degrees, acceptable at the study scale and consistent with the bandwidth
units.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .grid import GridSpec

log = logging.getLogger(__name__)

RULE_MAX_DISTANCE = "max_distance"
RULE_KNOT_SPACING = "knot_spacing"
BANDWIDTH_RULES = (RULE_MAX_DISTANCE, RULE_KNOT_SPACING)

BANDWIDTH_FACTOR = 2.5


@dataclass(frozen=True)
class SpatialKnots:
    """k knot locations as (lon, lat) rows plus the bandwidth theta."""

    knots: np.ndarray
    bandwidth: float
    rule: str

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 1:
            raise ValidationError("spatial knots must be a (k, 2) array of (lon, lat)")
        object.__setattr__(self, "knots", knots)
        if not self.bandwidth > 0:
            raise ValidationError("spatial bandwidth must be positive")
        if self.rule not in BANDWIDTH_RULES:
            raise ValidationError(f"unknown bandwidth rule {self.rule!r}")

    @property
    def k(self) -> int:
        return self.knots.shape[0]


@dataclass(frozen=True)
class TemporalKnots:
    """Equidistant year knots with squared-year scale kappa."""

    knots: np.ndarray
    kappa: float

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        if knots.ndim != 1 or knots.size < 1:
            raise ValidationError("temporal knots must be a non-empty 1-D array")
        if knots.size >= 2:
            gaps = np.diff(knots)
            if not np.all(gaps > 0):
                raise ValidationError("temporal knots must be strictly increasing")
            if not np.allclose(gaps, gaps[0]):
                raise ValidationError("temporal knots must be equidistant")
            if not np.isclose(self.kappa, abs(gaps[0])):
                raise ValidationError("kappa must equal the knot spacing when r >= 2")
        if not self.kappa > 0:
            raise ValidationError("kappa must be positive")
        object.__setattr__(self, "knots", knots)

    @property
    def r(self) -> int:
        return self.knots.size


def wendland_b1(d):
    """Compactly supported Wendland kernel.

    ``(1 - d)^6 / 3 * (35 d^2 + 18 d + 3)`` on [0, 1], zero beyond.
    Accepts scalars or arrays; negative distances are a domain error.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise DomainError("distance must be >= 0")
    inside = (1.0 - d) ** 6 / 3.0 * (35.0 * d**2 + 18.0 * d + 3.0)
    out = np.where(d <= 1.0, inside, 0.0)
    return float(out) if out.ndim == 0 else out


def make_spatial_knots(spec: GridSpec, grid_side: int,
                       rule: str = RULE_MAX_DISTANCE) -> SpatialKnots:
    """A grid_side x grid_side knot lattice spanning the domain inclusively.

    ``max_distance`` sets theta to 2.5x the largest pairwise knot
    distance (the knot-lattice diagonal); ``knot_spacing`` uses 2.5x the
    nearest-neighbor spacing instead, which keeps the basis localized.
    """
    if grid_side < 1:
        raise ValidationError("grid_side must be >= 1")
    if rule not in BANDWIDTH_RULES:
        raise ValidationError(f"unknown bandwidth rule {rule!r}")
    if grid_side == 1:
        lons = np.array([(spec.lon_min + spec.lon_max) / 2.0])
        lats = np.array([(spec.lat_min + spec.lat_max) / 2.0])
    else:
        lons = np.linspace(spec.lon_min, spec.lon_max, grid_side)
        lats = np.linspace(spec.lat_min, spec.lat_max, grid_side)
    lon_grid, lat_grid = np.meshgrid(lons, lats)
    knots = np.column_stack([lon_grid.ravel(), lat_grid.ravel()])

    diag = float(np.hypot(spec.lon_max - spec.lon_min, spec.lat_max - spec.lat_min))
    if knots.shape[0] == 1:
        if rule == RULE_MAX_DISTANCE:
            log.warning(
                "single spatial knot: max-distance bandwidth undefined, "
                "falling back to the knot_spacing rule"
            )
        # A lone knot has no neighbor; use the domain diagonal as spacing.
        log.warning("single spatial knot: using the domain diagonal as spacing")
        return SpatialKnots(knots, BANDWIDTH_FACTOR * diag, RULE_KNOT_SPACING)

    if rule == RULE_MAX_DISTANCE:
        diff = knots[:, None, :] - knots[None, :, :]
        max_dist = float(np.sqrt((diff**2).sum(axis=2)).max())
        theta = BANDWIDTH_FACTOR * max_dist
    else:
        spacing = min(
            (spec.lon_max - spec.lon_min) / (grid_side - 1),
            (spec.lat_max - spec.lat_min) / (grid_side - 1),
        )
        theta = BANDWIDTH_FACTOR * spacing
    log.info("spatial knots: k=%d rule=%s theta=%.4f deg", knots.shape[0], rule, theta)
    return SpatialKnots(knots, theta, rule)


def make_temporal_knots(year_start: int, year_end: int, count: int,
                        kappa: float = None) -> TemporalKnots:
    """``count`` equidistant year knots spanning [year_start, year_end].

    For two or more knots kappa is the knot spacing; a single knot sits at
    the interval midpoint and needs an explicit kappa (default 1 year^2).
    """
    if count < 1:
        raise ValidationError("temporal knot count must be >= 1")
    if count == 1:
        knots = np.array([(year_start + year_end) / 2.0])
        return TemporalKnots(knots, 1.0 if kappa is None else kappa)
    if year_end <= year_start:
        raise DomainError("temporal domain is degenerate for multiple knots")
    knots = np.linspace(year_start, year_end, count)
    return TemporalKnots(knots, float(knots[1] - knots[0]))


def spatial_basis(s, knots: SpatialKnots) -> np.ndarray:
    """Wendland basis values of one (lon, lat) location at every knot."""
    s = np.asarray(s, dtype=np.float64)
    d = np.sqrt(((knots.knots - s) ** 2).sum(axis=1)) / knots.bandwidth
    return wendland_b1(d)


def temporal_basis(t, knots: TemporalKnots) -> np.ndarray:
    """Gaussian basis values exp(-(t - v_j)^2 / (2 kappa)) at every knot.

    The decaying (negative-exponent) form; it equals 1 exactly at knots.
    """
    diff = float(t) - knots.knots
    return np.exp(-(diff**2) / (2.0 * knots.kappa))


def encode(s, t, covariates, sk: SpatialKnots, tk: TemporalKnots) -> np.ndarray:
    """Stack (covariates, spatial basis, temporal basis) for one pixel-year."""
    covariates = np.asarray(covariates, dtype=np.float64).reshape(-1)
    if covariates.size and not np.all(np.isfinite(covariates)):
        raise DomainError("covariates must be finite")
    return np.concatenate([covariates, spatial_basis(s, sk), temporal_basis(t, tk)])


def encode_batch(lons, lats, years, covariates, sk: SpatialKnots,
                 tk: TemporalKnots) -> np.ndarray:
    """Vectorized encode: one feature row per (pixel, year).

    ``covariates`` is (n, p); returns (n, p + k + r).
    """
    lons = np.asarray(lons, dtype=np.float64)
    lats = np.asarray(lats, dtype=np.float64)
    years = np.asarray(years, dtype=np.float64)
    covariates = np.asarray(covariates, dtype=np.float64)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    n = lons.size
    if not (lats.size == n and years.size == n and covariates.shape[0] == n):
        raise ValidationError("encode_batch inputs must share their leading length")
    if covariates.size and not np.all(np.isfinite(covariates)):
        raise DomainError("covariates must be finite")

    dlon = lons[:, None] - sk.knots[None, :, 0]
    dlat = lats[:, None] - sk.knots[None, :, 1]
    spatial = wendland_b1(np.sqrt(dlon**2 + dlat**2) / sk.bandwidth)
    temporal = np.exp(-((years[:, None] - tk.knots[None, :]) ** 2) / (2.0 * tk.kappa))
    return np.concatenate([covariates, spatial, temporal], axis=1)


def feature_dim(n_covariates: int, sk: SpatialKnots, tk: TemporalKnots) -> int:
    return n_covariates + sk.k + tk.r


def save_features_csv(path, lons, lats, years, features) -> None:
    """Debug export: lon, lat, year, then one column per feature."""
    features = np.asarray(features)
    with open(path, "w") as fh:
        cols = ",".join(f"f{i}" for i in range(features.shape[1]))
        fh.write(f"lon,lat,year,{cols}\n")
        for lon, lat, year, row in zip(lons, lats, years, features):
            vals = ",".join(repr(float(v)) for v in row)
            fh.write(f"{float(lon)!r},{float(lat)!r},{int(year)},{vals}\n")
