import io
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from agri.flooddamage.errors import GridMismatchError
from agri.flooddamage.raster import GeoTransform, Raster, boolean_raster
from agri.flooddamage.report import (
    REPORT_COLUMNS,
    EvaluationReport,
    MetricRow,
    segmentation_rows,
    sr_quality_rows,
)

GEO = GeoTransform(0.0, 0.0, 3.0, -3.0)


def _smooth(size: int = 32) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] / size
    return (0.5 * np.sin(4 * x) * np.cos(3 * y)).astype(np.float32)


def test_sr_quality_rows():
    hr = Raster.from_array(_smooth(), GEO)
    sr = Raster.from_array(_smooth() + 0.2, GEO)

    rows = sr_quality_rows("sr/pre", sr, hr, baseline=hr)

    values = {row.metric: row.value for row in rows}
    assert list(values) == ["psnr", "ssim", "baseline_psnr", "baseline_ssim"]
    assert values["psnr"] == pytest.approx(20.0, abs=1e-4)
    assert values["baseline_psnr"] == np.inf
    assert values["baseline_ssim"] == pytest.approx(1.0)
    assert values["ssim"] < 1.0
    assert all(row.pixel_count == 32 * 32 for row in rows)

    with pytest.raises(GridMismatchError):
        sr_quality_rows("sr/pre", Raster.from_array(_smooth(), GEO.offset(1, 0)), hr)


def test_segmentation_rows_restricted_to_a_region():
    truth = np.array([[0, 1, 2, 2], [0, 1, 2, 0]], dtype=np.float32)
    pred = np.array([[0, 1, 2, 0], [1, 1, 2, 0]], dtype=np.float32)
    region = np.array([[1, 1, 1, 1], [0, 1, 1, 1]], dtype=bool)

    rows = segmentation_rows(
        "seg",
        Raster.from_array(truth, GEO),
        Raster.from_array(pred, GEO),
        boolean_raster(region, GEO),
    )

    values = {row.metric: row.value for row in rows}
    # outside the region the wrong prediction at (1, 0) does not count
    assert values["f1_no"] == pytest.approx(0.8)
    assert values["f1_partial"] == 1.0
    assert values["f1_full"] == pytest.approx(0.8)
    assert values["pixel_accuracy"] == pytest.approx(6 / 7)
    assert {row.pixel_count for row in rows} == {7}
    assert len(rows) == 3 * 3 + 2


def test_report_lookup_and_frame():
    report = EvaluationReport(config_hash="abc")
    report.extend([MetricRow("seg/sr", "f1_full", 0.75, 100)])

    assert report.value("seg/sr", "f1_full") == 0.75
    with pytest.raises(KeyError):
        report.value("seg/lr", "f1_full")
    assert list(report.to_frame().columns) == REPORT_COLUMNS


def test_report_files(tmp_path: Path):
    report = EvaluationReport(
        config_hash="0" * 64,
        rows=[
            MetricRow("sr/pre", "psnr", 31.5, 9),
            MetricRow("sr/pre", "ssim", 0.9, 9),
        ],
    )

    report.write(tmp_path / "report.csv", tmp_path / "report.txt")

    text = (tmp_path / "report.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "# config_hash=" + "0" * 64
    assert lines[1].startswith("# numpy=")
    frame = pd.read_csv(io.StringIO(text), comment="#")
    assert frame["value"].tolist() == [31.5, 0.9]
    assert frame["pixel_count"].tolist() == [9, 9]

    table = (tmp_path / "report.txt").read_text()
    assert "psnr" in table and "31.5" in table
    assert "(no metrics)" in EvaluationReport(config_hash="x").to_table()
