"""Grid data model, conversions, synthetic generator, and format round trips."""

import numpy as np
import pytest

from aridprob.errors import DomainError, ParseError, SchemaError, ValidationError
from aridprob.grid import (
    GridSpec,
    StGrid,
    SynthConfig,
    convert_kelvin_to_celsius,
    convert_precip_rate_to_cm,
    load_grid,
    load_grid_csv,
    load_rasters,
    month_days,
    save_grid,
    save_rasters,
    synth_generate,
    winsorize,
)


SMALL_SPEC = GridSpec(
    lat_min=0.0, lat_max=2.0, lon_min=10.0, lon_max=12.0,
    resolution=1.0, year_start=2000, year_end=2001,
)


def random_grid(spec, seed, missing_frac=0.0):
    rng = np.random.default_rng(seed)
    shape = (spec.n_years, 12, spec.n_lat, spec.n_lon)
    precip = rng.uniform(0.0, 30.0, shape)
    temp = rng.uniform(-20.0, 40.0, shape)
    if missing_frac:
        for cube in (precip, temp):
            holes = rng.random(shape) < missing_frac
            cube[holes] = np.nan
    return StGrid.from_cubes(spec, precip, temp)


# --- unit conversions -------------------------------------------------------

def test_precip_rate_conversion_examples():
    assert convert_precip_rate_to_cm(1e-5, 30) == pytest.approx(2.592, rel=1e-12)
    assert convert_precip_rate_to_cm(0.0, 31) == 0.0
    assert convert_precip_rate_to_cm(1.0 / 86400.0, 28) == pytest.approx(2.8, rel=1e-12)


def test_precip_rate_conversion_rejects_bad_input():
    with pytest.raises(DomainError):
        convert_precip_rate_to_cm(-1e-6, 30)
    with pytest.raises(DomainError):
        convert_precip_rate_to_cm(1e-5, 27)


def test_precip_rate_conversion_is_linear():
    rng = np.random.default_rng(0)
    for _ in range(200):
        rate = rng.uniform(0.0, 1e-3)
        a = rng.uniform(0.0, 5.0)
        days = int(rng.choice([28, 29, 30, 31]))
        assert convert_precip_rate_to_cm(a * rate, days) == pytest.approx(
            a * convert_precip_rate_to_cm(rate, days), rel=1e-12, abs=1e-300
        )


def test_kelvin_conversion_examples():
    assert convert_kelvin_to_celsius(273.15) == pytest.approx(0.0)
    assert convert_kelvin_to_celsius(300.0) == pytest.approx(26.85)
    assert convert_kelvin_to_celsius(0.0) == pytest.approx(-273.15)
    with pytest.raises(DomainError):
        convert_kelvin_to_celsius(-0.1)


def test_month_days_gregorian():
    assert month_days(1960, 2) == 29
    assert month_days(1961, 2) == 28
    assert month_days(1900, 2) == 28  # century non-leap
    assert month_days(2000, 2) == 29  # 400-year leap
    assert month_days(1975, 1) == 31


# --- winsorize --------------------------------------------------------------

def test_winsorize_examples():
    out = winsorize([-5.0, 0.5, 10.0], 0.001, 2.0)
    assert np.allclose(out, [0.001, 0.5, 2.0])
    inside = [0.5, 1.0, 1.5]
    assert np.allclose(winsorize(inside, 0.001, 2.0), inside)
    assert np.allclose(winsorize([0.001, 2.0], 0.001, 2.0), [0.001, 2.0])


def test_winsorize_rejects_bad_bounds():
    with pytest.raises(DomainError):
        winsorize([1.0], 2.0, 2.0)


def test_winsorize_idempotent():
    rng = np.random.default_rng(1)
    x = rng.normal(0.0, 10.0, 500)
    once = winsorize(x, -1.0, 3.0)
    assert np.array_equal(winsorize(once, -1.0, 3.0), once)
    assert once.shape == x.shape


# --- grid spec and types ----------------------------------------------------

def test_gridspec_counts_and_centers():
    spec = GridSpec(0.0, 40.0, -20.0, 60.0, 0.25, 1960, 1989)
    assert spec.n_lat == 160 and spec.n_lon == 320
    lats = spec.lat_centers()
    assert lats[0] == pytest.approx(0.125)
    assert lats[-1] == pytest.approx(39.875)


@pytest.mark.parametrize("kwargs", [
    dict(lat_min=5.0, lat_max=5.0),
    dict(resolution=-1.0),
    dict(year_start=2001, year_end=2000),
])
def test_gridspec_invariants(kwargs):
    base = dict(lat_min=0.0, lat_max=2.0, lon_min=0.0, lon_max=2.0,
                resolution=1.0, year_start=2000, year_end=2001)
    base.update(kwargs)
    with pytest.raises(ValidationError):
        GridSpec(**base)


def test_stgrid_rejects_negative_precip():
    shape = (SMALL_SPEC.n_years, 12, SMALL_SPEC.n_lat, SMALL_SPEC.n_lon)
    precip = np.zeros(shape)
    precip[0, 0, 0, 0] = -0.5
    with pytest.raises(ValidationError):
        StGrid.from_cubes(SMALL_SPEC, precip, np.zeros(shape))


# --- synthetic generator ----------------------------------------------------

def test_synth_deterministic():
    cfg = SynthConfig(spec=SMALL_SPEC, seed=7)
    a = synth_generate(cfg)
    b = synth_generate(cfg)
    for fa, fb in zip(a.precip + a.temp, b.precip + b.temp):
        assert np.array_equal(fa.values, fb.values)
    c = synth_generate(SynthConfig(spec=SMALL_SPEC, seed=8))
    assert any(
        not np.array_equal(fa.values, fc.values) for fa, fc in zip(a.precip, c.precip)
    )


def test_synth_constant_without_noise_or_season():
    cfg = SynthConfig(spec=SMALL_SPEC, seed=0, noise_sd=0.0, seasonal_amp=0.0)
    grid = synth_generate(cfg)
    planes = grid.year_planes("precip", 2000)
    assert np.allclose(planes, planes[0])


def test_synth_clamps_at_zero():
    cfg = SynthConfig(
        spec=SMALL_SPEC, seed=3, precip_base=1.0, precip_gradient=5.0, noise_sd=0.0,
        seasonal_amp=0.0,
    )
    grid = synth_generate(cfg)
    planes = grid.year_planes("precip", 2000)
    assert np.all(planes[:, -1, :] == 0.0)  # northernmost rows clamp to exactly 0
    noisy = synth_generate(SynthConfig(
        spec=SMALL_SPEC, seed=3, precip_base=1.0, precip_gradient=5.0, noise_sd=2.0,
    ))
    assert np.all(noisy.year_planes("precip", 2000) >= 0.0)


def test_synth_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(spec=SMALL_SPEC, seed=0, noise_sd=-1.0)
    with pytest.raises(ValidationError):
        SynthConfig(spec=SMALL_SPEC, seed=0, precip_base=-1.0)


# --- grid formats -----------------------------------------------------------

def test_binary_round_trip_bit_exact(tmp_path):
    grid = random_grid(SMALL_SPEC, seed=11, missing_frac=0.1)
    path = tmp_path / "grid.bin"
    save_grid(grid, path, format="binary")
    back = load_grid(path)
    assert back.spec == grid.spec
    for fa, fb in zip(grid.precip + grid.temp, back.precip + back.temp):
        assert np.array_equal(fa.values, fb.values, equal_nan=True)


def test_csv_round_trip_six_significant_digits(tmp_path):
    rng = np.random.default_rng(4)
    for trial in range(3):
        grid = random_grid(SMALL_SPEC, seed=rng.integers(1 << 30), missing_frac=0.15)
        path = tmp_path / f"grid{trial}.csv"
        save_grid(grid, path, format="csv")
        back = load_grid_csv(path, SMALL_SPEC)
        for fa, fb in zip(grid.precip + grid.temp, back.precip + back.temp):
            assert np.array_equal(np.isnan(fa.values), np.isnan(fb.values))
            ok = ~np.isnan(fa.values)
            if ok.any():
                rel = np.abs(fb.values[ok] - fa.values[ok]) / np.maximum(
                    np.abs(fa.values[ok]), 1e-300
                )
                assert rel.max() <= 1e-6


def test_csv_month_13_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "variable,year,month,lat_index,lon_index,value\n"
        "precip,2000,1,0,0,1.0\n"
        "precip,2000,13,0,0,1.0\n"
    )
    with pytest.raises(ParseError, match="line 3"):
        load_grid_csv(path, SMALL_SPEC)


def test_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(SchemaError, match="no records"):
        load_grid_csv(path, SMALL_SPEC)
    path.write_text("variable,year,month,lat_index,lon_index,value\n")
    with pytest.raises(SchemaError, match="no records"):
        load_grid_csv(path, SMALL_SPEC)


def test_csv_out_of_range_index_is_schema_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "variable,year,month,lat_index,lon_index,value\n"
        "precip,2000,1,99,0,1.0\n"
    )
    with pytest.raises(SchemaError, match="line 2"):
        load_grid_csv(path, SMALL_SPEC)


def test_save_to_unwritable_path_raises_oserror(tmp_path):
    grid = random_grid(SMALL_SPEC, seed=2)
    with pytest.raises(OSError):
        save_grid(grid, tmp_path / "no_such_dir" / "grid.bin", format="binary")


def test_binary_truncation_detected(tmp_path):
    grid = random_grid(SMALL_SPEC, seed=5)
    path = tmp_path / "grid.bin"
    save_grid(grid, path, format="binary")
    raw = path.read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[: len(raw) // 2])
    from aridprob.errors import IntegrityError
    with pytest.raises(IntegrityError):
        load_grid(tmp_path / "cut.bin")


def test_raster_round_trips(tmp_path):
    rng = np.random.default_rng(9)
    years = [2000, 2001]
    cube = rng.uniform(0.0, 1.0, (2, SMALL_SPEC.n_lat, SMALL_SPEC.n_lon))
    cube[0, 0, 0] = np.nan
    for fmt, tol in (("binary", 0.0), ("csv", 1e-6)):
        path = tmp_path / f"r.{fmt}"
        save_rasters(path, SMALL_SPEC, years, {"pr": cube}, format=fmt)
        spec_in, years_in, cubes = load_rasters(path, SMALL_SPEC)
        assert years_in == years
        assert np.array_equal(np.isnan(cubes["pr"]), np.isnan(cube))
        ok = ~np.isnan(cube)
        if tol == 0.0:
            assert np.array_equal(cubes["pr"][ok], cube[ok])
        else:
            assert np.allclose(cubes["pr"][ok], cube[ok], rtol=tol)
