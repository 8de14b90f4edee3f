"""Command-line pipeline: aridprob synth|label|train|predict|evaluate|fluct|render.

An extra ``pipeline`` command chains every stage from one config file.
Exit codes: 0 success, 1 usage or validation error, 2 data error,
3 internal error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import basis, evaluation, ktc, network, pipeline, render
from .config import load_pipeline_config
from .errors import (
    AridProbError,
    DataError,
    DomainError,
    UsageError,
    ValidationError,
)
from .grid import (
    is_aridgrid_file,
    load_grid,
    load_rasters,
    save_grid,
    save_rasters,
    synth_generate,
)
from .ktc import label_grid, load_labels, save_labels
from .fluctuation import (
    REGION_PRESETS,
    ProbCube,
    RegionMask,
    area_proportions,
    compute_cv_map,
    region_summary,
    save_cv_map,
    save_proportions_csv,
    save_region_summaries_csv,
)

log = logging.getLogger("aridprob")

# Render variables resolve against these raster-file variable names.
RENDER_SOURCES = {
    "class": ("label", "dominant"),
    "prob_arid": ("p_arid",),
    "prob_semiarid": ("p_semiarid",),
    "prob_nonarid": ("p_nonarid",),
    "pr_winsorized": ("pr",),
    "cv": ("cv",),
    "level": ("level",),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_years(text: str) -> list:
    """``1971:1989`` (inclusive) or a single ``1975``."""
    try:
        if ":" in text:
            a, b = text.split(":", 1)
            start, end = int(a), int(b)
        else:
            start = end = int(text)
    except ValueError:
        raise UsageError(f"cannot parse year range {text!r}; use START:END") from None
    if end < start:
        raise UsageError(f"year range {text!r} has end before start")
    return list(range(start, end + 1))


def _require_file(path, what):
    if path is None:
        raise UsageError(f"missing required {what} path")
    if not os.path.exists(path):
        raise ValidationError(f"{what} path does not exist: {path}")
    return path


def _load_config(args):
    if getattr(args, "config", None) is not None:
        _require_file(args.config, "config")
    return load_pipeline_config(
        getattr(args, "config", None),
        seed=getattr(args, "seed", None),
        out_dir=None,
    )


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    grid = synth_generate(cfg.synth)
    fmt = args.format or cfg.output_format
    save_grid(grid, args.out, format=fmt)
    log.info("wrote synthetic grid to %s (%s)", args.out, fmt)
    return 0


def cmd_label(args) -> int:
    cfg = _load_config(args)
    grid = load_grid(_require_file(args.grid, "grid"), cfg.spec)
    years = parse_years(args.years) if args.years else list(grid.spec.years())
    labels = label_grid(grid, years)
    gappy = [lr.year for lr in labels if (lr.classes == ktc.MISSING_CLASS).any()]
    if gappy:
        log.warning("years with missing labels from missing inputs: %s", gappy)
    fmt = args.format or cfg.output_format
    save_labels(labels, args.out, format=fmt)
    log.info("wrote %d label rasters to %s", len(labels), args.out)
    return 0


def _train_impl(cfg, grid, labels, model_out, resume=None):
    spec = grid.spec
    if not labels[0].spec.same_space(spec):
        raise ValidationError("grid and label rasters live on different grids")
    label_years = {lr.year for lr in labels}
    missing = [
        y for y in range(cfg.train_years[0], cfg.train_years[1] + 1)
        if y not in label_years
    ]
    if missing:
        raise ValidationError(f"label rasters missing training years {missing}")

    sk, tk = pipeline.build_knots(spec, cfg.basis, spec.year_start, spec.year_end)
    fingerprint = pipeline.basis_fingerprint(sk, tk, cfg.basis)
    basis_extra = {
        "spatial_knots": sk.knots.tolist(),
        "bandwidth": sk.bandwidth,
        "rule": sk.rule,
        "temporal_knots": tk.knots.tolist(),
        "kappa": tk.kappa,
        "clamp_pr": list(cfg.basis.clamp_pr) if cfg.basis.clamp_pr else None,
        "standardize_covariates": cfg.basis.standardize_covariates,
        "fingerprint": fingerprint,
    }

    train_years = range(cfg.train_years[0], cfg.train_years[1] + 1)
    if resume is None:
        net_cfg = pipeline.default_network_config(
            cfg.basis.n_features, cfg.hidden_widths, cfg.dropout_rate, cfg.network_seed
        )
        net, history, state, train_acc = pipeline.train_on_labels(
            labels, cfg.basis, net_cfg, cfg.train, train_years, sk, tk
        )
    else:
        net, state, extra = network.load_checkpoint(resume)
        if extra.get("basis", {}).get("fingerprint") not in (None, fingerprint):
            raise ValidationError(
                "resume checkpoint was trained with a different basis configuration"
            )
        prev = extra.get("history", [])
        subset = [lr for lr in labels if lr.year in set(train_years)]
        ds = pipeline.assemble_dataset(subset, sk, tk, cfg.basis)
        initial = prev[-1]["epoch"] if prev else 0
        net, more, state = network.train(
            net, ds.features, ds.labels, cfg.train, state=state, initial_epoch=initial
        )
        history = prev + more
        probs = network.predict_probs(net, ds.features)
        train_acc = float(np.mean(probs.argmax(axis=1) + 1 == ds.labels))

    extra = {
        "basis": basis_extra,
        "history": history,
        "train_accuracy": train_acc,
        "train_years": list(cfg.train_years),
    }
    network.save_checkpoint(net, model_out, state=state, extra=extra)
    losses_csv = str(model_out) + ".losses.csv"
    with open(losses_csv, "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for h in history:
            val = "" if h["val_loss"] is None else repr(h["val_loss"])
            fh.write(f"{h['epoch']},{h['train_loss']!r},{val}\n")
    render.plot_loss_history(history, str(model_out) + ".losses.png")
    log.info(
        "checkpoint %s: %d epochs, train accuracy %.4f",
        model_out, history[-1]["epoch"] if history else 0, train_acc,
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    grid = load_grid(_require_file(args.grid, "grid"), cfg.spec)
    labels = load_labels(_require_file(args.labels, "labels"), cfg.spec)
    resume = _require_file(args.resume, "resume checkpoint") if args.resume else None
    return _train_impl(cfg, grid, labels, args.out, resume=resume)


def _knots_from_extra(extra):
    b = extra.get("basis")
    if not b:
        raise DataError("checkpoint lacks the basis configuration needed to predict")
    sk = basis.SpatialKnots(
        np.asarray(b["spatial_knots"]), b["bandwidth"], b["rule"]
    )
    tk = basis.TemporalKnots(np.asarray(b["temporal_knots"]), b["kappa"])
    bcfg = pipeline.BasisConfig(
        spatial_grid_side=max(1, int(round(np.sqrt(len(b["spatial_knots"]))))),
        temporal_count=len(b["temporal_knots"]),
        bandwidth_rule=b["rule"],
        standardize_covariates=b.get("standardize_covariates", True),
        clamp_pr=tuple(b["clamp_pr"]) if b.get("clamp_pr") else None,
    )
    return sk, tk, bcfg


def _predict_impl(net, extra, grid, years, out_path, fmt):
    sk, tk, bcfg = _knots_from_extra(extra)
    cube, rasters = pipeline.predict_grid(net, grid, years, sk, tk, bcfg)
    spec = grid.spec
    label_cube = np.stack([
        np.where(r.classes == ktc.MISSING_CLASS, np.nan, r.classes.astype(float))
        for r in rasters
    ])
    variables = {
        "p_arid": cube.probs[..., 0],
        "p_semiarid": cube.probs[..., 1],
        "p_nonarid": cube.probs[..., 2],
        "label": label_cube,
        "pr": np.stack([r.pr for r in rasters]),
    }
    save_rasters(out_path, spec, years, variables, format=fmt)
    return cube, rasters


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    net, _, extra = network.load_checkpoint(_require_file(args.model, "model"))
    grid = load_grid(_require_file(args.grid, "grid"), cfg.spec)
    years = parse_years(args.years) if args.years else list(
        range(cfg.test_years[0], cfg.test_years[1] + 1)
    )
    fmt = args.format or cfg.output_format
    _predict_impl(net, extra, grid, years, args.out, fmt)
    log.info("wrote predictions for %d years to %s", len(years), args.out)
    return 0


def _evaluate_impl(truth, pred, out_dir):
    common = sorted({t.year for t in truth} & {p.year for p in pred})
    if not common:
        raise UsageError("truth and prediction share no years")
    report = evaluation.evaluate(
        [t for t in truth if t.year in common],
        [p for p in pred if p.year in common],
    )
    os.makedirs(out_dir, exist_ok=True)
    evaluation.save_metrics_csv(report, os.path.join(out_dir, "metrics.csv"))
    evaluation.save_accuracy_csv(report, os.path.join(out_dir, "accuracy.csv"))
    render.plot_metric_timeseries(report, os.path.join(out_dir, "metrics_timeseries.png"))
    return report


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    truth = load_labels(_require_file(args.truth, "truth"), cfg.spec)
    pred = load_labels(_require_file(args.pred, "prediction"), cfg.spec)
    report = _evaluate_impl(truth, pred, args.out)
    log.info("overall accuracy %.4f -> %s", report.overall_accuracy, args.out)
    return 0


def parse_regions(text) -> list:
    """Comma-separated preset names or name:lat0:lat1:lon0:lon1 boxes."""
    masks = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if ":" in token:
            parts = token.split(":")
            if len(parts) != 5:
                raise UsageError(
                    f"bad region {token!r}; use name:lat_min:lat_max:lon_min:lon_max"
                )
            try:
                masks.append(RegionMask(parts[0], *(float(v) for v in parts[1:])))
            except ValueError:
                raise UsageError(f"bad region bounds in {token!r}") from None
        elif token in REGION_PRESETS:
            masks.append(REGION_PRESETS[token])
        else:
            raise UsageError(
                f"unknown region preset {token!r}; presets: {sorted(REGION_PRESETS)}"
            )
    return masks


def _load_prob_cube(path, spec):
    spec_in, years, cubes = load_rasters(path, spec)
    return ProbCube.from_rasters(
        spec_in, years, cubes, renormalize=not is_aridgrid_file(path)
    )


def _raster_ext(fmt: str) -> str:
    return "bin" if fmt == "binary" else "csv"


def _fluct_impl(cube, masks, out_dir, weighted=False, fmt="binary"):
    cvmap = compute_cv_map(cube)
    os.makedirs(out_dir, exist_ok=True)
    save_cv_map(
        cvmap, cube.years,
        os.path.join(out_dir, f"cv_map.{_raster_ext(fmt)}"), format=fmt,
    )
    props = area_proportions(cvmap, latitude_weighted=weighted)
    save_proportions_csv(props, os.path.join(out_dir, "proportions.csv"))
    render.plot_cv_map(
        cvmap, os.path.join(out_dir, "cv_map.png"),
        title=f"cv of dominant-class probability {cube.years[0]}-{cube.years[-1]}",
    )
    if masks:
        summaries = [region_summary(cube, m) for m in masks]
        save_region_summaries_csv(summaries, os.path.join(out_dir, "regions.csv"))
    return cvmap, props


def cmd_fluct(args) -> int:
    cfg = _load_config(args)
    cube = _load_prob_cube(_require_file(args.pred, "prediction"), cfg.spec)
    if args.years:
        cube = cube.select_years(parse_years(args.years))
    masks = parse_regions(args.regions) if args.regions else []
    _fluct_impl(cube, masks, args.out, weighted=args.weighted, fmt=cfg.output_format)
    log.info("wrote fluctuation analysis to %s", args.out)
    return 0


def cmd_render(args) -> int:
    cfg = _load_config(args)
    spec, years, cubes = load_rasters(_require_file(args.raster, "raster"), cfg.spec)
    sources = RENDER_SOURCES[args.variable] if args.variable in RENDER_SOURCES else ()
    name = next((s for s in sources if s in cubes), None)
    if name is None:
        raise UsageError(
            f"raster file has no variable for {args.variable!r}; "
            f"file contains {sorted(cubes)}"
        )
    year = args.year if args.year is not None else years[0]
    if year not in years:
        raise UsageError(f"year {year} not in raster file (has {years})")
    plane = cubes[name][years.index(year)]
    rspec = render.RenderSpec(
        variable=args.variable,
        palette=args.palette or cfg.render_palette,
        scale=args.scale or cfg.render_scale,
    )
    render.save_render(plane, rspec, args.out)
    log.info("rendered %s (%d) to %s", args.variable, year, args.out)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    fmt = cfg.output_format
    ext = _raster_ext(fmt)

    grid_path = os.path.join(out, f"grid.{ext}")
    grid = synth_generate(cfg.synth)
    save_grid(grid, grid_path, format=fmt)

    labels = label_grid(grid, grid.spec.years())
    labels_path = os.path.join(out, f"labels.{ext}")
    save_labels(labels, labels_path, format=fmt)

    model_path = os.path.join(out, "model.ckpt")
    _train_impl(cfg, grid, labels, model_path)

    net, _, extra = network.load_checkpoint(model_path)
    test_years = list(range(cfg.test_years[0], cfg.test_years[1] + 1))
    pred_path = os.path.join(out, f"pred.{ext}")
    cube, pred_rasters = _predict_impl(net, extra, grid, test_years, pred_path, fmt)

    truth = [lr for lr in labels if lr.year in set(test_years)]
    report = _evaluate_impl(truth, pred_rasters, os.path.join(out, "eval"))

    masks = [m for m in REGION_PRESETS.values() if m.pixel_mask(cfg.spec).any()]
    skipped = sorted(set(REGION_PRESETS) - {m.name for m in masks})
    if skipped:
        log.info("region presets outside this grid skipped: %s", skipped)
    _fluct_impl(cube, masks, os.path.join(out, "fluct"), fmt=fmt)

    render_dir = os.path.join(out, "render")
    os.makedirs(render_dir, exist_ok=True)
    year = test_years[0]
    spec_in, years_in, cubes = load_rasters(pred_path, cfg.spec)
    yi = years_in.index(year)
    for variable in ("class", "prob_arid", "prob_semiarid", "prob_nonarid", "pr_winsorized"):
        name = next(s for s in RENDER_SOURCES[variable] if s in cubes)
        rspec = render.RenderSpec(
            variable=variable, palette=cfg.render_palette, scale=cfg.render_scale
        )
        render.save_render(
            cubes[name][yi], rspec, os.path.join(render_dir, f"{variable}_{year}.png")
        )
    _, _, cv_cubes = load_rasters(
        os.path.join(out, "fluct", f"cv_map.{ext}"), cfg.spec
    )
    for variable in ("cv", "level"):
        rspec = render.RenderSpec(
            variable=variable, palette=cfg.render_palette, scale=cfg.render_scale
        )
        render.save_render(
            cv_cubes[variable][0], rspec, os.path.join(render_dir, f"{variable}.png")
        )

    manifest = {
        "grid": grid_path,
        "labels": labels_path,
        "model": model_path,
        "predictions": pred_path,
        "eval_dir": os.path.join(out, "eval"),
        "fluct_dir": os.path.join(out, "fluct"),
        "render_dir": render_dir,
        "overall_accuracy": report.overall_accuracy,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("pipeline complete: %s", out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aridprob", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, help="master seed override")
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic grid")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"])

    p = add("label", cmd_label, "KT dry-climate labels and P/R rasters")
    p.add_argument("--grid", required=True)
    p.add_argument("--years")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"])

    p = add("train", cmd_train, "encode training years and fit the classifier")
    p.add_argument("--grid", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue training from")

    p = add("predict", cmd_predict, "per-pixel class probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--years")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["binary", "csv"])

    p = add("evaluate", cmd_evaluate, "metrics against KT ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)

    p = add("fluct", cmd_fluct, "coefficient-of-variation fluctuation analysis")
    p.add_argument("--pred", required=True)
    p.add_argument("--years")
    p.add_argument("--regions")
    p.add_argument("--weighted", action="store_true",
                   help="cos(latitude) area weighting for proportions")
    p.add_argument("--out", required=True)

    p = add("render", cmd_render, "render a raster variable to PNG")
    p.add_argument("--raster", required=True)
    p.add_argument("--variable", required=True, choices=sorted(RENDER_SOURCES))
    p.add_argument("--year", type=int)
    p.add_argument("--scale", type=int)
    p.add_argument("--palette")
    p.add_argument("--out", required=True)

    p = add("pipeline", cmd_pipeline, "run synth through render from one config")
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_help(sys.stderr)
            return 1
        return args.func(args) or 0
    except (UsageError, ValidationError, DomainError) as exc:
        log.error("%s", exc)
        return 1
    except DataError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2
    except AridProbError as exc:
        log.error("internal error: %s", exc)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        log.error("internal error: %r", exc)
        return 3


def entry():  # console-script target
    sys.exit(main())


if __name__ == "__main__":
    entry()
