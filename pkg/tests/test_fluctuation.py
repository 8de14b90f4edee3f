"""CV analysis: dominant classes, binning, proportions, and region summaries."""

import numpy as np
import pytest

from aridprob.errors import DomainError, UsageError, ValidationError
from aridprob.fluctuation import (
    REGION_PRESETS,
    CVMap,
    FluctuationLevel,
    ProbCube,
    RegionMask,
    area_proportions,
    bin_cv,
    compute_cv_map,
    cv,
    dominant_class,
    mean_probs,
    region_summary,
    save_region_summaries_csv,
)
from aridprob.grid import DEFAULT_SPEC, GridSpec
from aridprob.ktc import AridityClass


SPEC = GridSpec(0.0, 4.0, 0.0, 5.0, 1.0, 2000, 2004)


def uniform_cube(spec=SPEC, years=(2000, 2001, 2002)):
    probs = np.full((len(years), spec.n_lat, spec.n_lon, 3), 1.0 / 3.0)
    return ProbCube(spec=spec, years=years, probs=probs)


def cube_from_series(series_by_pixel, spec=None):
    """Build a 1 x n_pixels cube from per-pixel probability-triple series."""
    n_years = len(series_by_pixel[0])
    n = len(series_by_pixel)
    spec = spec or GridSpec(0.0, 1.0, 0.0, float(n), 1.0, 2000, 2000 + n_years - 1)
    probs = np.empty((n_years, 1, n, 3))
    for j, series in enumerate(series_by_pixel):
        probs[:, 0, j, :] = series
    return ProbCube(spec=spec, years=range(2000, 2000 + n_years), probs=probs)


# --- prob cube --------------------------------------------------------------

def test_prob_cube_validates_sums():
    probs = np.full((1, SPEC.n_lat, SPEC.n_lon, 3), 0.4)
    with pytest.raises(ValidationError):
        ProbCube(spec=SPEC, years=[2000], probs=probs)


def test_prob_cube_renormalizes_rounded_rasters():
    rng = np.random.default_rng(0)
    raw = rng.random((2, SPEC.n_lat, SPEC.n_lon, 3))
    raw /= raw.sum(axis=-1, keepdims=True)
    rounded = np.round(raw, 6)  # CSV-grade precision breaks the 1e-12 sum
    cube = ProbCube.from_rasters(
        SPEC, [2000, 2001],
        {"p_arid": rounded[..., 0], "p_semiarid": rounded[..., 1],
         "p_nonarid": rounded[..., 2]},
        renormalize=True,
    )
    assert np.max(np.abs(cube.probs.sum(axis=-1) - 1.0)) <= 1e-12


# --- means and dominance ----------------------------------------------------

def test_mean_probs_examples():
    cube = cube_from_series([
        [(0.7, 0.2, 0.1)] * 3,
        [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.5, 0.5, 0.0)],
    ])
    means = mean_probs(cube)
    assert np.allclose(means[0, 0], [0.7, 0.2, 0.1])
    assert np.allclose(means[0, 1], [0.5, 0.5, 0.0])


def test_mean_probs_missing_pixel():
    probs = np.full((2, 1, 1, 3), np.nan)
    cube = ProbCube(spec=GridSpec(0, 1, 0, 1, 1.0, 2000, 2001),
                    years=[2000, 2001], probs=probs)
    assert np.all(np.isnan(mean_probs(cube)))


def test_dominant_class_examples():
    assert dominant_class([0.7, 0.2, 0.1]) == AridityClass.ARID
    assert dominant_class([0.4, 0.4, 0.2]) == AridityClass.ARID  # tie-break
    assert dominant_class([0.1, 0.2, 0.7]) == AridityClass.NON_ARID


# --- cv ---------------------------------------------------------------------

def test_cv_examples():
    assert cv([0.8, 0.8, 0.8]) == 0.0
    assert cv([0.6, 0.8, 1.0]) == pytest.approx(0.20412, abs=1e-5)
    assert cv([0.37]) == 0.0  # population sd of one point
    with pytest.raises(DomainError):
        cv([])


def test_cv_scale_invariance():
    rng = np.random.default_rng(1)
    series = rng.uniform(0.1, 1.0, 20)
    for a in (0.5, 2.0, 17.0):
        assert cv(a * series) == pytest.approx(cv(series), rel=1e-9)


def test_cv_sample_flag():
    series = [0.6, 0.8, 1.0]
    pop = cv(series)
    samp = cv(series, sample=True)
    assert samp == pytest.approx(pop * np.sqrt(3.0 / 2.0), rel=1e-12)
    assert np.isnan(cv([0.4], sample=True))


# --- binning ----------------------------------------------------------------

def test_bin_cv_boundaries_exact():
    assert bin_cv(0.1) == FluctuationLevel.VERY_LOW
    assert bin_cv(0.2) == FluctuationLevel.LOW
    assert bin_cv(0.3) == FluctuationLevel.MODERATE
    assert bin_cv(0.4) == FluctuationLevel.HIGH
    assert bin_cv(0.25) == FluctuationLevel.MODERATE
    assert bin_cv(0.41) == FluctuationLevel.VERY_HIGH
    assert bin_cv(0.0) == FluctuationLevel.VERY_LOW
    with pytest.raises(DomainError):
        bin_cv(-0.01)


def test_bin_cv_total_partition():
    rng = np.random.default_rng(2)
    for v in rng.uniform(0.0, 1.0, 1000):
        assert bin_cv(float(v)) in FluctuationLevel


# --- cv map and proportions -------------------------------------------------

def test_compute_cv_map_matches_scalar_pipeline():
    rng = np.random.default_rng(3)
    raw = rng.random((6, SPEC.n_lat, SPEC.n_lon, 3))
    raw /= raw.sum(axis=-1, keepdims=True)
    cube = ProbCube(spec=SPEC, years=range(2000, 2006 - 0), probs=raw)
    cvmap = compute_cv_map(cube)
    for i in range(SPEC.n_lat):
        for j in range(SPEC.n_lon):
            mean_triple = raw[:, i, j].mean(axis=0)
            dom = dominant_class(mean_triple)
            assert cvmap.dominant[i, j] == dom
            series = raw[:, i, j, int(dom) - 1]
            assert cvmap.cv[i, j] == pytest.approx(cv(series), rel=1e-9)
            assert cvmap.level[i, j] == bin_cv(cvmap.cv[i, j])


def test_compute_cv_map_constant_series_is_very_low():
    cube = uniform_cube()
    cvmap = compute_cv_map(cube)
    assert np.all(cvmap.cv == 0.0)
    assert np.all(cvmap.level == int(FluctuationLevel.VERY_LOW))


def test_area_proportions_worked_case():
    values = np.array([0.05] * 5 + [0.15] * 3 + [0.35] * 2)
    spec = GridSpec(0.0, 1.0, 0.0, 10.0, 1.0, 2000, 2000)
    levels = np.array([[int(bin_cv(v)) for v in values]], dtype=np.int8)
    cvmap = CVMap(spec=spec, dominant=np.ones((1, 10), np.int8),
                  cv=values.reshape(1, 10), level=levels)
    props = area_proportions(cvmap)
    assert props[FluctuationLevel.VERY_LOW] == pytest.approx(50.0)
    assert props[FluctuationLevel.LOW] == pytest.approx(30.0)
    assert props[FluctuationLevel.MODERATE] == 0.0
    assert props[FluctuationLevel.HIGH] == pytest.approx(20.0)
    assert props[FluctuationLevel.VERY_HIGH] == 0.0


def test_area_proportions_partition_to_100():
    rng = np.random.default_rng(4)
    raw = rng.random((5, SPEC.n_lat, SPEC.n_lon, 3))
    raw /= raw.sum(axis=-1, keepdims=True)
    cube = ProbCube(spec=SPEC, years=range(2000, 2005), probs=raw)
    cvmap = compute_cv_map(cube)
    for weighted in (False, True):
        props = area_proportions(cvmap, latitude_weighted=weighted)
        assert sum(props.values()) == pytest.approx(100.0, abs=1e-9)


# --- regions ----------------------------------------------------------------

def test_region_summary_singleton_pixel():
    rng = np.random.default_rng(5)
    raw = rng.random((4, SPEC.n_lat, SPEC.n_lon, 3))
    raw /= raw.sum(axis=-1, keepdims=True)
    cube = ProbCube(spec=SPEC, years=range(2000, 2004), probs=raw)
    mask = RegionMask("one", 2.2, 2.8, 3.2, 3.8)  # contains exactly one center
    assert mask.pixel_mask(SPEC).sum() == 1
    summary = region_summary(cube, mask)
    i, j = np.argwhere(mask.pixel_mask(SPEC))[0]
    assert np.allclose(summary.by_year, raw[:, i, j, :])


def test_region_summary_uniform_ratios():
    summary = region_summary(uniform_cube(), RegionMask("all", 0.0, 4.0, 0.0, 5.0))
    for value in summary.ratios.values():
        assert value == pytest.approx(1.0)


def test_region_summary_outside_grid_rejected():
    with pytest.raises(UsageError):
        region_summary(uniform_cube(), REGION_PRESETS["iran"])


def test_region_presets_intersect_default_domain():
    for mask in REGION_PRESETS.values():
        assert mask.pixel_mask(DEFAULT_SPEC).any()


def test_region_summary_csv_schema(tmp_path):
    summary = region_summary(uniform_cube(), RegionMask("box", 0.0, 2.0, 0.0, 2.0))
    path = tmp_path / "regions.csv"
    save_region_summaries_csv([summary], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "region,year,p_arid,p_semiarid,p_nonarid"
    assert lines[1].startswith("box,2000,")
    assert lines[-1].startswith("box,overall,")
