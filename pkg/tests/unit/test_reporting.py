"""Unit tests for CSV report export."""
import pandas as pd
import pytest

from srgbnoise.models.statistics import (
    CorrelationPoint,
    CorrelationProfile,
    DenoiseReport,
    DenoiseRow,
    HeteroParams,
    KLRow,
)
from srgbnoise.services.reporting import KL_COLUMNS, ReportingService


@pytest.mark.unit
class TestReportingService:
    """Test report generation."""

    def test_export_to_csv_column_order(self):
        """Test columns follow the requested order."""
        data = [{"b": 2, "a": 1}]
        assert ReportingService.export_to_csv(data, ["a", "b"]) == b"a,b\n1,2\n"

    def test_kl_rows_blank_iso(self):
        """Test aggregate rows leave the ISO column empty."""
        rows = [KLRow("S6", 100, "model", 0.25, 12), KLRow("overall", None, "model", 0.5, 24)]
        csv = ReportingService.export_to_csv([r.to_dict() for r in rows], KL_COLUMNS)
        assert csv.decode().splitlines() == [
            "camera,iso,method,kl,n_values",
            "S6,100,model,0.25,12",
            "overall,,model,0.5,24",
        ]

    def test_write_hetero(self, tmp_path):
        """Test the hetero report has one row per channel."""
        params = HeteroParams((0.5, 0.4, 0.3), (4.0, 3.0, 2.0), (False, False, True))
        frame = pd.read_csv(ReportingService.write_hetero(tmp_path / "hetero.csv", params))
        assert list(frame.columns) == ["channel", "beta_s_sq", "beta_c_sq", "clamped"]
        assert list(frame["channel"]) == ["R", "G", "B"]
        assert list(frame["clamped"]) == [False, False, True]

    def test_write_correlation(self, tmp_path):
        """Test the correlation report lists distances in order."""
        profile = CorrelationProfile(
            points=(CorrelationPoint(1.0, 0.5, 10), CorrelationPoint(2**0.5, 0.1, 8))
        )
        frame = pd.read_csv(ReportingService.write_correlation(tmp_path / "c.csv", profile))
        assert list(frame.columns) == ["d", "r", "count", "degenerate"]
        assert frame["r"].tolist() == [0.5, 0.1]

    def test_write_denoise_report(self, tmp_path):
        """Test the denoise report keeps row order."""
        report = DenoiseReport(
            rows=[DenoiseRow("s1", "S6", 100, 30.0, 0.9), DenoiseRow("s2", "S6", 200, 28.0, 0.8)]
        )
        frame = pd.read_csv(ReportingService.write_denoise_report(tmp_path / "d.csv", report))
        assert frame["scene_id"].tolist() == ["s1", "s2"]
        assert report.mean_psnr == pytest.approx(29.0)

    def test_summarize_kl(self):
        """Test the overall KL per method."""
        rows = [
            KLRow("S6", 100, "awgn", 0.3, 1),
            KLRow("overall", None, "awgn", 0.3, 1),
            KLRow("overall", None, "model", 0.1, 1),
        ]
        assert ReportingService.summarize_kl(rows) == {"awgn": 0.3, "model": 0.1}
