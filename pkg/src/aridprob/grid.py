"""Spatio-temporal grid data model, unit conversions, and on-disk formats.

Grid orientation is fixed throughout the package: row 0 is the southernmost
latitude band and column 0 the westernmost longitude band.  Cell values sit
at cell centers.  Missing cells are NaN in memory.

Two exchange formats are provided:

* CSV with header ``variable,year,month,lat_index,lon_index,value``; one row
  per cell-month, missing cells omitted, values written with 7 significant
  digits so every cell round-trips within 1e-6 relative.  Annual (monthless)
  rasters use ``month = 0``.
* A little-endian binary format: 16-byte header (magic ``ARIDGRID``, one
  version byte, zero padding), the grid spec, the year list, the variable
  names, then row-major float64 planes ordered (variable, year, month) with
  NaN encoding missing.
"""

import calendar
import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CoverageError,
    DomainError,
    IntegrityError,
    ParseError,
    SchemaError,
    ValidationError,
)

GRID_MAGIC = b"ARIDGRID"
GRID_FORMAT_VERSION = 1
CSV_HEADER = ["variable", "year", "month", "lat_index", "lon_index", "value"]

SECONDS_PER_DAY = 86400.0  # equals the 8 x 10800 s three-hourly decomposition
CM_PER_KG_M2 = 0.1  # 1 kg/m^2 of water is a 0.1 cm layer

# Additive seasonal temperature swing, in degrees C, per unit seasonal_amp.
TEMP_SEASONAL_SCALE_C = 10.0


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid covering a closed year range."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    resolution: float
    year_start: int
    year_end: int

    def __post_init__(self):
        if not (self.lat_max > self.lat_min and self.lon_max > self.lon_min):
            raise ValidationError("grid bounds must satisfy lat_max > lat_min and lon_max > lon_min")
        if not self.resolution > 0:
            raise ValidationError("resolution must be positive")
        if self.year_end < self.year_start:
            raise ValidationError("year_end must be >= year_start")
        if self.n_lat < 1 or self.n_lon < 1:
            raise ValidationError("grid must contain at least one cell per axis")

    @property
    def n_lat(self) -> int:
        return int(round((self.lat_max - self.lat_min) / self.resolution))

    @property
    def n_lon(self) -> int:
        return int(round((self.lon_max - self.lon_min) / self.resolution))

    @property
    def n_years(self) -> int:
        return self.year_end - self.year_start + 1

    def years(self) -> range:
        return range(self.year_start, self.year_end + 1)

    def lat_centers(self) -> np.ndarray:
        """Cell-center latitudes, row 0 southernmost."""
        return self.lat_min + (np.arange(self.n_lat) + 0.5) * self.resolution

    def lon_centers(self) -> np.ndarray:
        """Cell-center longitudes, column 0 westernmost."""
        return self.lon_min + (np.arange(self.n_lon) + 0.5) * self.resolution

    def same_space(self, other: "GridSpec") -> bool:
        """True when the spatial footprint matches (year ranges may differ)."""
        return (
            self.lat_min == other.lat_min
            and self.lat_max == other.lat_max
            and self.lon_min == other.lon_min
            and self.lon_max == other.lon_max
            and self.resolution == other.resolution
        )


# Default study domain: Sahara/Sahel box at quarter-degree resolution.
DEFAULT_SPEC = GridSpec(
    lat_min=0.0, lat_max=40.0, lon_min=-20.0, lon_max=60.0,
    resolution=0.25, year_start=1960, year_end=1989,
)


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValidationError(f"expected array of shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MonthlyField:
    """One month of one variable on the grid; NaN cells are missing."""

    year: int
    month: int
    values: np.ndarray

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValidationError(f"month must be 1..12, got {self.month}")
        object.__setattr__(self, "values", _frozen_array(self.values))
        if self.values.ndim != 2:
            raise ValidationError("field values must be a 2-D array")

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)


@dataclass(frozen=True)
class StGrid:
    """Monthly precipitation (cm) and temperature (degC) cube over a spec."""

    spec: GridSpec
    precip: tuple
    temp: tuple

    def __post_init__(self):
        object.__setattr__(self, "precip", tuple(self.precip))
        object.__setattr__(self, "temp", tuple(self.temp))
        expected = [(y, m) for y in self.spec.years() for m in range(1, 13)]
        for name, fields in (("precip", self.precip), ("temp", self.temp)):
            got = [(f.year, f.month) for f in fields]
            if got != expected:
                raise ValidationError(
                    f"{name} fields must cover every (year, month) of the spec "
                    f"in order; expected {len(expected)} fields, got {len(got)}"
                )
            shape = (self.spec.n_lat, self.spec.n_lon)
            for f in fields:
                if f.values.shape != shape:
                    raise ValidationError(
                        f"{name} field {f.year}-{f.month:02d} has shape "
                        f"{f.values.shape}, spec requires {shape}"
                    )
        for f in self.precip:
            if np.any(f.values < 0):
                raise ValidationError(
                    f"negative precipitation in {f.year}-{f.month:02d}"
                )

    @classmethod
    def from_cubes(cls, spec: GridSpec, precip: np.ndarray, temp: np.ndarray) -> "StGrid":
        """Build from (n_years, 12, n_lat, n_lon) cubes."""
        shape = (spec.n_years, 12, spec.n_lat, spec.n_lon)
        precip = np.asarray(precip, dtype=np.float64)
        temp = np.asarray(temp, dtype=np.float64)
        if precip.shape != shape or temp.shape != shape:
            raise ValidationError(f"cubes must have shape {shape}")
        years = list(spec.years())
        pf = tuple(
            MonthlyField(years[i], m + 1, precip[i, m])
            for i in range(spec.n_years) for m in range(12)
        )
        tf = tuple(
            MonthlyField(years[i], m + 1, temp[i, m])
            for i in range(spec.n_years) for m in range(12)
        )
        return cls(spec, pf, tf)

    def _fields(self, variable: str) -> tuple:
        if variable == "precip":
            return self.precip
        if variable == "temp":
            return self.temp
        raise ValidationError(f"unknown variable {variable!r}")

    def year_planes(self, variable: str, year: int) -> np.ndarray:
        """The 12 monthly planes of one variable for one year, stacked."""
        if year not in self.spec.years():
            raise CoverageError(
                f"year {year} outside grid coverage "
                f"{self.spec.year_start}..{self.spec.year_end}"
            )
        base = (year - self.spec.year_start) * 12
        fields = self._fields(variable)
        return np.stack([fields[base + m].values for m in range(12)])


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the deterministic synthetic-grid generator."""

    spec: GridSpec
    seed: int
    precip_gradient: float = 0.8   # cm per month per degree latitude
    precip_base: float = 8.0       # cm per month at latitude 0
    noise_sd: float = 1.0          # cm, monthly Gaussian noise
    temp_base: float = 28.0        # degC at latitude 0
    temp_lapse: float = 0.4        # degC per degree latitude
    seasonal_amp: float = 0.3      # fractional seasonal modulation

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if self.precip_base < 0:
            raise ValidationError("precip_base must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be an unsigned integer")


def month_days(year: int, month: int) -> int:
    """Calendar days in a month, Gregorian leap rule included."""
    if not 1 <= month <= 12:
        raise DomainError(f"month must be 1..12, got {month}")
    return calendar.monthrange(year, month)[1]


def convert_precip_rate_to_cm(rate, days_in_month: int):
    """Convert a precipitation rate in kg m^-2 s^-1 to monthly depth in cm.

    The monthly mass per area is rate x 86400 s/day x n days; dividing by
    water density turns 1 kg/m^2 into a 0.1 cm layer.
    """
    if days_in_month not in (28, 29, 30, 31):
        raise DomainError(f"days_in_month must be 28..31, got {days_in_month}")
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0):
        raise DomainError("precipitation rate must be >= 0")
    out = rate * SECONDS_PER_DAY * days_in_month * CM_PER_KG_M2
    return float(out) if out.ndim == 0 else out


def convert_kelvin_to_celsius(t):
    """Kelvin to Celsius; rejects temperatures below absolute zero."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise DomainError("temperature in K must be >= 0")
    out = t - 273.15
    return float(out) if out.ndim == 0 else out


def winsorize(values, lo: float, hi: float) -> np.ndarray:
    """Clamp every value into [lo, hi], preserving order and length."""
    if not lo < hi:
        raise DomainError(f"winsorize bounds must satisfy lo < hi, got {lo} >= {hi}")
    return np.clip(np.asarray(values, dtype=np.float64), lo, hi)


def synth_generate(cfg: SynthConfig) -> StGrid:
    """Generate a deterministic synthetic grid.

    Monthly precipitation at latitude phi is
    ``max(0, precip_base - precip_gradient * phi) * (1 + seasonal_amp *
    cos(2 pi (m - 1) / 12)) + N(0, noise_sd)``, clamped at zero so the
    non-negativity invariant always holds.  Temperature is
    ``temp_base - temp_lapse * phi`` plus an additive seasonal swing of
    ``seasonal_amp * 10 degC`` and carries no noise.
    """
    spec = cfg.spec
    rng = np.random.default_rng(cfg.seed)
    lat = spec.lat_centers()[:, None]  # (n_lat, 1)
    base = np.maximum(0.0, cfg.precip_base - cfg.precip_gradient * lat)
    shape = (spec.n_lat, spec.n_lon)

    precip = np.empty((spec.n_years, 12, spec.n_lat, spec.n_lon))
    temp = np.empty_like(precip)
    for yi in range(spec.n_years):
        for m in range(12):
            phase = math.cos(2.0 * math.pi * m / 12.0)
            seasonal = 1.0 + cfg.seasonal_amp * phase
            noise = rng.normal(0.0, cfg.noise_sd, shape)
            precip[yi, m] = np.maximum(0.0, base * seasonal + noise)
            temp[yi, m] = np.broadcast_to(
                cfg.temp_base - cfg.temp_lapse * lat
                + cfg.seasonal_amp * TEMP_SEASONAL_SCALE_C * phase,
                shape,
            )
    return StGrid.from_cubes(spec, precip, temp)


# ---------------------------------------------------------------------------
# On-disk formats.  Both grids and annual raster stacks share one layout;
# a monthly grid is a stack with months_per_year = 12, an annual raster
# stack has months_per_year = 1 and writes month = 0 in CSV.
# ---------------------------------------------------------------------------

_SPEC_STRUCT = struct.Struct("<5d2i")


def _format_value(v: float) -> str:
    return f"{v:.7g}"


def _write_stack_csv(path, spec, years, months_per_year, variables):
    annual = months_per_year == 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for name, cube in variables.items():
            for yi, year in enumerate(years):
                for m in range(months_per_year):
                    plane = cube[yi, m]
                    month_out = 0 if annual else m + 1
                    for i in range(spec.n_lat):
                        row = plane[i]
                        for j in range(spec.n_lon):
                            v = row[j]
                            if np.isnan(v):
                                continue
                            writer.writerow(
                                [name, year, month_out, i, j, _format_value(v)]
                            )


def _write_stack_binary(path, spec, years, months_per_year, variables):
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(bytes([GRID_FORMAT_VERSION]))
        fh.write(b"\x00" * 7)
        fh.write(_SPEC_STRUCT.pack(
            spec.lat_min, spec.lat_max, spec.lon_min, spec.lon_max,
            spec.resolution, spec.year_start, spec.year_end,
        ))
        fh.write(struct.pack("<i", months_per_year))
        fh.write(struct.pack("<i", len(years)))
        fh.write(np.asarray(years, dtype="<i4").tobytes())
        fh.write(struct.pack("<i", len(variables)))
        for name in variables:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<i", len(raw)))
            fh.write(raw)
        for name, cube in variables.items():
            fh.write(np.ascontiguousarray(cube, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise IntegrityError(f"truncated file while reading {what}")
    return data


def _read_stack_binary(path):
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != GRID_MAGIC:
            raise SchemaError(f"{path}: not an ARIDGRID file")
        version = _read_exact(fh, 1, "version")[0]
        if version != GRID_FORMAT_VERSION:
            raise SchemaError(
                f"{path}: unsupported format version {version}, "
                f"this build reads version {GRID_FORMAT_VERSION}"
            )
        _read_exact(fh, 7, "header padding")
        fields = _SPEC_STRUCT.unpack(_read_exact(fh, _SPEC_STRUCT.size, "grid spec"))
        spec = GridSpec(*fields[:5], int(fields[5]), int(fields[6]))
        months_per_year = struct.unpack("<i", _read_exact(fh, 4, "months"))[0]
        n_years = struct.unpack("<i", _read_exact(fh, 4, "year count"))[0]
        years = np.frombuffer(
            _read_exact(fh, 4 * n_years, "year list"), dtype="<i4"
        ).tolist()
        n_vars = struct.unpack("<i", _read_exact(fh, 4, "variable count"))[0]
        names = []
        for _ in range(n_vars):
            ln = struct.unpack("<i", _read_exact(fh, 4, "variable name"))[0]
            names.append(_read_exact(fh, ln, "variable name").decode("utf-8"))
        plane = spec.n_lat * spec.n_lon
        variables = {}
        for name in names:
            raw = _read_exact(
                fh, 8 * plane * months_per_year * n_years, f"planes of {name}"
            )
            cube = np.frombuffer(raw, dtype="<f8").reshape(
                n_years, months_per_year, spec.n_lat, spec.n_lon
            )
            variables[name] = cube.astype(np.float64)
        if fh.read(1):
            raise SchemaError(f"{path}: trailing bytes after final plane")
    return spec, years, months_per_year, variables


def _read_stack_csv(path, spec, annual, allowed_variables=None):
    years = set()
    variables = {}

    def cube_for(name):
        if name not in variables:
            months = 1 if annual else 12
            variables[name] = np.full(
                (spec.n_years, months, spec.n_lat, spec.n_lon), np.nan
            )
        return variables[name]

    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: no records") from None
        if header != CSV_HEADER:
            raise SchemaError(
                f"{path}: bad header {header!r}, expected {CSV_HEADER!r}"
            )
        count = 0
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(f"{path} line {lineno}: expected 6 fields, got {len(row)}")
            name = row[0]
            if allowed_variables is not None and name not in allowed_variables:
                raise ParseError(
                    f"{path} line {lineno}: unknown variable {name!r}"
                )
            try:
                year, month, i, j = (int(x) for x in row[1:5])
                value = float(row[5])
            except ValueError as exc:
                raise ParseError(f"{path} line {lineno}: {exc}") from None
            if annual:
                if month != 0:
                    raise ParseError(
                        f"{path} line {lineno}: annual rasters require month = 0, got {month}"
                    )
            elif not 1 <= month <= 12:
                raise ParseError(f"{path} line {lineno}: month must be 1..12, got {month}")
            if not spec.year_start <= year <= spec.year_end:
                raise SchemaError(
                    f"{path} line {lineno}: year {year} outside spec range "
                    f"{spec.year_start}..{spec.year_end}"
                )
            if not (0 <= i < spec.n_lat and 0 <= j < spec.n_lon):
                raise SchemaError(
                    f"{path} line {lineno}: cell index ({i}, {j}) outside "
                    f"{spec.n_lat} x {spec.n_lon} grid"
                )
            if name == "precip" and value < 0:
                raise ParseError(f"{path} line {lineno}: negative precipitation {value}")
            key = (name, year, month, i, j)
            if key in seen:
                raise ParseError(f"{path} line {lineno}: duplicate cell {key}")
            seen.add(key)
            cube = cube_for(name)
            cube[year - spec.year_start, 0 if annual else month - 1, i, j] = value
            years.add(year)
            count += 1
        if count == 0:
            raise SchemaError(f"{path}: no records")
    return sorted(years), variables


def save_grid(grid: StGrid, path, format: str = "binary") -> None:
    """Write an StGrid; ``binary`` is exact, ``csv`` round-trips to 1e-6 rel."""
    spec = grid.spec
    cubes = {
        name: np.stack(
            [grid.year_planes(name, y) for y in spec.years()]
        )
        for name in ("precip", "temp")
    }
    years = list(spec.years())
    if format == "csv":
        _write_stack_csv(path, spec, years, 12, cubes)
    elif format == "binary":
        _write_stack_binary(path, spec, years, 12, cubes)
    else:
        raise ValidationError(f"unknown grid format {format!r}")


def load_grid_csv(path, spec: GridSpec) -> StGrid:
    """Load a grid CSV against a known spec; absent cells become missing."""
    _, variables = _read_stack_csv(
        path, spec, annual=False, allowed_variables=("precip", "temp")
    )
    empty = np.full((spec.n_years, 12, spec.n_lat, spec.n_lon), np.nan)
    precip = variables.get("precip", empty)
    temp = variables.get("temp", empty)
    return StGrid.from_cubes(spec, precip, temp)


def load_grid_binary(path) -> StGrid:
    spec, years, months, variables = _read_stack_binary(path)
    if months != 12:
        raise SchemaError(f"{path}: not a monthly grid (months_per_year = {months})")
    if years != list(spec.years()):
        raise SchemaError(f"{path}: year list does not match the stored spec")
    missing = [v for v in ("precip", "temp") if v not in variables]
    if missing:
        raise SchemaError(f"{path}: missing variables {missing}")
    return StGrid.from_cubes(spec, variables["precip"], variables["temp"])


def is_aridgrid_file(path) -> bool:
    """True when the file starts with the binary format magic."""
    try:
        with open(path, "rb") as fh:
            return fh.read(8) == GRID_MAGIC
    except OSError:
        return False


def load_grid(path, spec: GridSpec = None) -> StGrid:
    """Load either grid format; CSV needs a GridSpec."""
    if is_aridgrid_file(path):
        return load_grid_binary(path)
    if spec is None:
        raise ValidationError("loading a CSV grid requires a GridSpec")
    return load_grid_csv(path, spec)


def save_rasters(path, spec: GridSpec, years, variables, format: str = "binary") -> None:
    """Write annual rasters: ``variables`` maps name -> (n_years, n_lat, n_lon)."""
    years = [int(y) for y in years]
    cubes = {}
    for name, arr in variables.items():
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (len(years), spec.n_lat, spec.n_lon):
            raise ValidationError(
                f"raster {name!r} has shape {arr.shape}, expected "
                f"({len(years)}, {spec.n_lat}, {spec.n_lon})"
            )
        cubes[name] = arr[:, None, :, :]
    if format == "csv":
        _write_stack_csv(path, spec, years, 1, cubes)
    elif format == "binary":
        _write_stack_binary(path, spec, years, 1, cubes)
    else:
        raise ValidationError(f"unknown raster format {format!r}")


def load_rasters(path, spec: GridSpec = None):
    """Load annual rasters; returns (spec, years, {name: cube}).

    CSV inputs need the spec and recover years from the data rows, so a year
    whose cells are all missing cannot round-trip through CSV.
    """
    if is_aridgrid_file(path):
        spec_in, years, months, variables = _read_stack_binary(path)
        if months != 1:
            raise SchemaError(f"{path}: not an annual raster file")
        cubes = {name: cube[:, 0, :, :] for name, cube in variables.items()}
        return spec_in, years, cubes
    if spec is None:
        raise ValidationError("loading CSV rasters requires a GridSpec")
    years, variables = _read_stack_csv(path, spec, annual=True)
    cubes = {}
    for name, cube in variables.items():
        out = np.full((len(years), spec.n_lat, spec.n_lon), np.nan)
        for k, year in enumerate(years):
            out[k] = cube[year - spec.year_start, 0]
        cubes[name] = out
    return spec, years, cubes
