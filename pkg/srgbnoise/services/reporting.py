"""Report export service."""
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from loguru import logger

from srgbnoise.models.statistics import (
    CorrelationProfile,
    DenoiseReport,
    HeteroParams,
    KLRow,
    StdIntensityCurve,
)

HETERO_COLUMNS = ["channel", "beta_s_sq", "beta_c_sq", "clamped"]
STD_CURVE_COLUMNS = ["channel", "bin_center", "std", "count", "reliable"]
CORRELATION_COLUMNS = ["d", "r", "count", "degenerate"]
KL_COLUMNS = ["camera", "iso", "method", "kl", "n_values"]
DENOISE_COLUMNS = ["scene_id", "camera", "iso", "psnr", "ssim"]
SYNTHESIS_COLUMNS = ["scene_id", "camera", "iso", "noise_std", "lag1_r"]


class ReportingService:
    """Service for turning analysis and evaluation results into CSV reports."""

    @staticmethod
    def export_to_csv(data: List[Dict], columns: Optional[List[str]] = None) -> bytes:
        """
        Export data to CSV format.

        Args:
            data: List of dictionaries to export
            columns: Optional column order

        Returns:
            CSV bytes
        """
        df = pd.DataFrame(data, columns=columns)
        if columns:
            df = df[columns]

        return df.to_csv(index=False, float_format="%.10g", lineterminator="\n").encode("utf-8")

    @staticmethod
    def write_csv(path: Path, data: List[Dict], columns: Optional[List[str]] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(ReportingService.export_to_csv(data, columns))
        logger.info("Report written", path=str(path), rows=len(data))
        return path

    @staticmethod
    def write_hetero(path: Path, params: HeteroParams) -> Path:
        return ReportingService.write_csv(path, params.to_rows(), HETERO_COLUMNS)

    @staticmethod
    def write_std_curve(path: Path, curve: StdIntensityCurve) -> Path:
        return ReportingService.write_csv(path, curve.to_rows(), STD_CURVE_COLUMNS)

    @staticmethod
    def write_correlation(path: Path, profile: CorrelationProfile) -> Path:
        return ReportingService.write_csv(path, profile.to_rows(), CORRELATION_COLUMNS)

    @staticmethod
    def write_kl_report(path: Path, rows: List[KLRow]) -> Path:
        return ReportingService.write_csv(path, [r.to_dict() for r in rows], KL_COLUMNS)

    @staticmethod
    def write_denoise_report(path: Path, report: DenoiseReport) -> Path:
        return ReportingService.write_csv(
            path, [r.to_dict() for r in report.rows], DENOISE_COLUMNS
        )

    @staticmethod
    def write_synthesis(path: Path, rows: List[Dict]) -> Path:
        return ReportingService.write_csv(path, rows, SYNTHESIS_COLUMNS)

    @staticmethod
    def summarize_kl(rows: List[KLRow]) -> Dict[str, float]:
        """Overall KL per method."""
        return {r.method: r.kl for r in rows if r.camera == "overall"}
