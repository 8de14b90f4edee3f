"""Raster rendering: palettes, fixed scales, upscaling, sidecars, figures."""

import json

import numpy as np
import pytest

from aridprob.errors import ValidationError
from aridprob.evaluation import evaluate
from aridprob.grid import GridSpec
from aridprob.ktc import LabelRaster
from aridprob.render import (
    CLASS_COLORS,
    MISSING_COLOR,
    RenderSpec,
    render_raster,
    save_render,
    plot_loss_history,
    plot_metric_timeseries,
)


def test_class_raster_uses_exactly_three_colors_plus_gray():
    values = np.array([[1.0, 2.0], [3.0, np.nan]])
    rgb = render_raster(values, RenderSpec(variable="class"))
    colors = {tuple(np.round(rgb[i, j], 6)) for i in range(2) for j in range(2)}
    expected = {tuple(np.round(c, 6)) for c in CLASS_COLORS.values()}
    expected.add(tuple(np.round(MISSING_COLOR, 6)))
    assert colors == expected


def test_class_raster_is_north_up():
    values = np.array([[1.0, 1.0], [3.0, 3.0]])  # row 0 = south
    rgb = render_raster(values, RenderSpec(variable="class"))
    assert tuple(rgb[0, 0]) == CLASS_COLORS[3]  # image top = north
    assert tuple(rgb[1, 0]) == CLASS_COLORS[1]


def test_probability_scale_is_fixed_not_data_scaled():
    lo = render_raster(np.array([[0.2, 0.4]]), RenderSpec(variable="prob_arid"))
    full = render_raster(np.array([[0.0, 1.0]]), RenderSpec(variable="prob_arid"))
    # 0.2/0.4 must not stretch to the ramp ends
    assert not np.allclose(lo[0, 0], full[0, 0])
    assert not np.allclose(lo[0, 1], full[0, 1])


def test_pr_render_clips_to_winsor_bounds():
    inside = render_raster(np.array([[2.0, 0.001]]), RenderSpec(variable="pr_winsorized"))
    outside = render_raster(np.array([[50.0, -3.0]]), RenderSpec(variable="pr_winsorized"))
    assert np.allclose(inside, outside)


def test_integer_upscale_dimensions():
    values = np.arange(6.0).reshape(2, 3) / 10.0
    rgb = render_raster(values, RenderSpec(variable="cv", scale=4))
    assert rgb.shape == (8, 12, 3)
    # each source pixel becomes a constant 4x4 block
    assert np.allclose(rgb[:4, :4], rgb[0, 0])


def test_render_spec_validation():
    with pytest.raises(ValidationError):
        RenderSpec(variable="nope")
    with pytest.raises(ValidationError):
        RenderSpec(variable="cv", scale=0)
    with pytest.raises(ValidationError):
        RenderSpec(variable="cv", palette="not_a_palette")


def test_save_render_writes_png_and_sidecar(tmp_path):
    values = np.array([[1.0, 2.0], [3.0, np.nan]])
    path = tmp_path / "classes.png"
    save_render(values, RenderSpec(variable="class", scale=3), path)
    assert path.exists()
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    sidecar = json.loads((tmp_path / "classes.png.json").read_text())
    assert sidecar["variable"] == "class"
    assert sidecar["image_shape"] == [6, 6]
    assert sidecar["classes"]["1"]["name"] == "arid"


def test_report_figures_write_files(tmp_path):
    spec = GridSpec(0.0, 2.0, 0.0, 2.0, 1.0, 2000, 2001)
    rng = np.random.default_rng(0)
    truth = [
        LabelRaster(spec=spec, year=y, classes=rng.integers(1, 4, (2, 2)).astype(np.int8),
                    pr=np.zeros((2, 2)))
        for y in (2000, 2001)
    ]
    report = evaluate(truth, truth)
    plot_metric_timeseries(report, tmp_path / "metrics.png")
    assert (tmp_path / "metrics.png").exists()

    history = [
        {"epoch": 1, "train_loss": 1.0, "val_loss": 1.1},
        {"epoch": 2, "train_loss": 0.6, "val_loss": 0.8},
    ]
    plot_loss_history(history, tmp_path / "loss.png")
    assert (tmp_path / "loss.png").exists()
