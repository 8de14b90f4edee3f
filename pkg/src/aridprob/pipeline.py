"""Dataset assembly and end-to-end train/predict orchestration.

A training example is one non-missing pixel-year: the P/R covariate plus
the spatial and temporal basis values at that pixel's cell center and year.
The default configuration (one covariate, 5x5 spatial knots, 5 temporal
knots) yields 31 input features.
"""

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from . import basis, ktc, network
from .errors import UsageError, ValidationError
from .grid import GridSpec, StGrid, winsorize
from .ktc import MISSING_CLASS, LabelRaster
from .fluctuation import ProbCube

log = logging.getLogger(__name__)

N_COVARIATES = 1  # the P/R metric


@dataclass(frozen=True)
class BasisConfig:
    spatial_grid_side: int = 5
    temporal_count: int = 5
    bandwidth_rule: str = basis.RULE_MAX_DISTANCE
    standardize_covariates: bool = True
    clamp_pr: tuple = None  # optional (lo, hi) winsorization of the covariate

    def __post_init__(self):
        if self.spatial_grid_side < 1 or self.temporal_count < 1:
            raise ValidationError("basis knot counts must be >= 1")
        if self.bandwidth_rule not in basis.BANDWIDTH_RULES:
            raise ValidationError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.clamp_pr is not None:
            lo, hi = self.clamp_pr
            if not lo < hi:
                raise ValidationError("clamp_pr bounds must satisfy lo < hi")

    @property
    def n_features(self) -> int:
        return N_COVARIATES + self.spatial_grid_side**2 + self.temporal_count


def build_knots(spec: GridSpec, cfg: BasisConfig, year_start: int, year_end: int):
    """Spatial knots over the domain and temporal knots over the study years."""
    sk = basis.make_spatial_knots(spec, cfg.spatial_grid_side, cfg.bandwidth_rule)
    tk = basis.make_temporal_knots(year_start, year_end, cfg.temporal_count)
    return sk, tk


def basis_fingerprint(sk, tk, cfg: BasisConfig) -> str:
    payload = {
        "spatial_knots": sk.knots.tolist(),
        "bandwidth": sk.bandwidth,
        "rule": sk.rule,
        "temporal_knots": tk.knots.tolist(),
        "kappa": tk.kappa,
        "n_covariates": N_COVARIATES,
        "clamp_pr": list(cfg.clamp_pr) if cfg.clamp_pr else None,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Dataset:
    """Feature rows aligned with pixel bookkeeping for raster reconstruction."""

    features: np.ndarray  # (n, p + k + r)
    labels: np.ndarray    # (n,) class codes 1..3; 0 when labels were absent
    years: np.ndarray     # (n,)
    lat_idx: np.ndarray   # (n,)
    lon_idx: np.ndarray   # (n,)
    lons: np.ndarray
    lats: np.ndarray


def assemble_dataset(labels, sk, tk, cfg: BasisConfig, require_labels=True) -> Dataset:
    """Encode every usable pixel-year of the given label rasters.

    A pixel-year is usable when its P/R covariate is finite; for training
    the class must be present as well.
    """
    if not labels:
        raise UsageError("no label rasters to assemble")
    spec = labels[0].spec
    lat_c = spec.lat_centers()
    lon_c = spec.lon_centers()

    feats, ys, yrs, lats_i, lons_i = [], [], [], [], []
    for lr in labels:
        usable = np.isfinite(lr.pr)
        if require_labels:
            usable &= lr.classes != MISSING_CLASS
        if not usable.any():
            continue
        ii, jj = np.nonzero(usable)
        pr = lr.pr[ii, jj]
        if cfg.clamp_pr is not None:
            pr = winsorize(pr, *cfg.clamp_pr)
        rows = basis.encode_batch(
            lon_c[jj], lat_c[ii], np.full(ii.shape, lr.year), pr[:, None], sk, tk
        )
        feats.append(rows)
        ys.append(lr.classes[ii, jj].astype(int))
        yrs.append(np.full(ii.shape, lr.year))
        lats_i.append(ii)
        lons_i.append(jj)
    if not feats:
        raise UsageError("no usable pixel-years in the label rasters")
    ii = np.concatenate(lats_i)
    jj = np.concatenate(lons_i)
    return Dataset(
        features=np.concatenate(feats),
        labels=np.concatenate(ys),
        years=np.concatenate(yrs),
        lat_idx=ii,
        lon_idx=jj,
        lons=lon_c[jj],
        lats=lat_c[ii],
    )


def default_network_config(n_features: int, hidden_widths=None,
                           dropout_rate=0.5, seed=0) -> network.NetworkConfig:
    """Two hidden layers as wide as the input unless widths are given."""
    if hidden_widths is None:
        hidden_widths = (n_features, n_features)
    widths = (n_features, *hidden_widths, network.N_CLASSES)
    return network.NetworkConfig(layer_widths=widths, dropout_rate=dropout_rate, seed=seed)


def train_on_labels(labels, basis_cfg: BasisConfig, net_cfg: network.NetworkConfig,
                    tcfg: network.TrainConfig, years, sk, tk):
    """Train a fresh network on the label rasters of the given years.

    Returns (net, history, adam_state, train_accuracy).
    """
    years = set(years)
    subset = [lr for lr in labels if lr.year in years]
    if not subset:
        raise UsageError("no label rasters inside the training year range")
    ds = assemble_dataset(subset, sk, tk, basis_cfg)
    if ds.features.shape[1] != net_cfg.layer_widths[0]:
        raise ValidationError(
            f"network input width {net_cfg.layer_widths[0]} does not match "
            f"the {ds.features.shape[1]} encoded features"
        )
    net = network.init(net_cfg)
    if basis_cfg.standardize_covariates:
        network.fit_standardizer(net, ds.features, N_COVARIATES)
    net, history, state = network.train(net, ds.features, ds.labels, tcfg)
    probs = network.predict_probs(net, ds.features)
    pred = probs.argmax(axis=1) + 1
    train_acc = float(np.mean(pred == ds.labels))
    log.info("trained on %d examples, train accuracy %.4f", ds.labels.size, train_acc)
    return net, history, state, train_acc


def predict_grid(net: network.Network, grid: StGrid, years, sk, tk,
                 basis_cfg: BasisConfig):
    """Probability cube and argmax label rasters for the requested years.

    The P/R covariate for each target year is computed from the grid
    itself; ground-truth classes are not consulted.
    """
    years = list(years)
    label_rasters = ktc.label_grid(grid, years)
    ds = assemble_dataset(label_rasters, sk, tk, basis_cfg, require_labels=False)
    probs = network.predict_probs(net, ds.features)

    spec = grid.spec
    cube = np.full((len(years), spec.n_lat, spec.n_lon, 3), np.nan)
    year_pos = {y: k for k, y in enumerate(years)}
    rows = np.array([year_pos[y] for y in ds.years])
    cube[rows, ds.lat_idx, ds.lon_idx] = probs

    pred_rasters = []
    for k, year in enumerate(years):
        classes = np.full((spec.n_lat, spec.n_lon), MISSING_CLASS, dtype=np.int8)
        present = ~np.isnan(cube[k]).any(axis=-1)
        if present.any():
            classes[present] = cube[k][present].argmax(axis=-1).astype(np.int8) + 1
        pred_rasters.append(LabelRaster(
            spec=spec, year=year, classes=classes,
            pr=label_rasters[k].pr,
        ))
    return ProbCube(spec=spec, years=years, probs=cube), pred_rasters
