"""Evaluation reports: metric rows, CSV and plain-text table."""

import logging
import platform
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
from attr import Factory, define
from rxn.utilities.files import PathLike

from .change_detection import DamageLabel
from .metrics import (
    SsimParams,
    confusion_from_arrays,
    f1_scores,
    psnr,
    ssim,
)
from .raster import Raster, require_cogridded, require_single_band
from .utils import atomic_write_text

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

REPORT_COLUMNS = ["scope", "metric", "value", "pixel_count"]


@define(frozen=True)
class MetricRow:
    """
    Attributes:
        scope: what was evaluated ("sr/pre", "seg/sr", "scene-3/seg/lr", ...).
        metric: metric name.
        value: metric value.
        pixel_count: number of pixels the value is computed on.
    """

    scope: str
    metric: str
    value: float
    pixel_count: int


@define
class EvaluationReport:
    config_hash: str
    rows: List[MetricRow] = Factory(list)

    def extend(self, rows: Iterable[MetricRow]) -> None:
        self.rows.extend(rows)

    def value(self, scope: str, metric: str) -> float:
        for row in self.rows:
            if row.scope == scope and row.metric == metric:
                return row.value
        raise KeyError(f"No metric {metric} for {scope}")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[r.scope, r.metric, r.value, r.pixel_count] for r in self.rows],
            columns=REPORT_COLUMNS,
        )

    def header_lines(self) -> List[str]:
        return [
            f"# config_hash={self.config_hash}",
            f"# numpy={np.__version__} machine={platform.machine()}; floating-point "
            "results may differ in the last bits across platforms",
        ]

    def to_csv(self) -> str:
        header = "\n".join(self.header_lines())
        return header + "\n" + self.to_frame().to_csv(index=False)

    def to_table(self) -> str:
        frame = self.to_frame()
        body = frame.to_string(index=False) if len(frame) else "(no metrics)"
        return "\n".join(self.header_lines()) + "\n" + body + "\n"

    def write(self, csv_path: PathLike, table_path: Optional[PathLike] = None) -> None:
        atomic_write_text(csv_path, self.to_csv())
        if table_path is not None:
            atomic_write_text(table_path, self.to_table())
        logger.info(
            f'Wrote evaluation report with {len(self.rows)} rows to "{csv_path}".'
        )


def sr_quality_rows(
    scope: str,
    sr: Raster,
    hr: Raster,
    ssim_params: Optional[SsimParams] = None,
    baseline: Optional[Raster] = None,
) -> List[MetricRow]:
    """
    PSNR and SSIM of a super-resolved NDVI raster against the reference.

    With ``baseline`` (for instance the bicubic upsampling of the LR input)
    the same metrics are added for it, on the pixels valid in all three.

    Raises:
        GridMismatchError: if the rasters are not co-gridded.
    """
    rasters = [sr, hr] + ([] if baseline is None else [baseline])
    require_single_band(*rasters)
    require_cogridded(*rasters)
    valid = np.logical_and.reduce([r.valid_mask for r in rasters])
    count = int(valid.sum())

    rows = [
        MetricRow(scope, "psnr", psnr(sr.values, hr.values, valid_mask=valid), count),
        MetricRow(
            scope, "ssim", ssim(sr.values, hr.values, ssim_params, valid), count
        ),
    ]
    if baseline is not None:
        rows.append(
            MetricRow(
                scope,
                "baseline_psnr",
                psnr(baseline.values, hr.values, valid_mask=valid),
                count,
            )
        )
        rows.append(
            MetricRow(
                scope,
                "baseline_ssim",
                ssim(baseline.values, hr.values, ssim_params, valid),
                count,
            )
        )
    return rows


def segmentation_rows(
    scope: str,
    truth: Raster,
    prediction: Raster,
    region: Optional[Raster] = None,
) -> List[MetricRow]:
    """
    Class-wise precision, recall and F1, macro F1 and pixel accuracy of a
    damage map.

    Args:
        scope: label of the rows.
        truth: reference damage labels.
        prediction: predicted damage labels on the same grid.
        region: optional boolean raster restricting the evaluation (cropland).
    """
    rasters = [truth, prediction] + ([] if region is None else [region])
    require_single_band(*rasters)
    require_cogridded(*rasters)
    valid = truth.valid_mask & prediction.valid_mask
    if region is not None:
        valid &= region.valid_mask & (region.values != 0)
    count = int(valid.sum())

    cm = confusion_from_arrays(truth.values, prediction.values, valid)
    scores = f1_scores(cm)
    rows = []
    for label in DamageLabel:
        name = label.name.lower()
        rows.append(
            MetricRow(scope, f"precision_{name}", scores.precision[label], count)
        )
        rows.append(MetricRow(scope, f"recall_{name}", scores.recall[label], count))
        rows.append(MetricRow(scope, f"f1_{name}", scores.f1[label], count))
    rows.append(MetricRow(scope, "macro_f1", scores.macro_f1, count))
    rows.append(MetricRow(scope, "pixel_accuracy", cm.pixel_accuracy(), count))
    return rows
