"""Unit tests for the error taxonomy and CLI rendering."""
import pytest

from srgbnoise.utils.errors import (
    EXIT_DIVERGED,
    EXIT_VALIDATION,
    DivergedError,
    FitError,
    InternalError,
    NotFoundError,
    NumericalError,
    ParseError,
    ValidationError,
    render_error,
)


@pytest.mark.unit
class TestErrors:
    """Test error classes."""

    @pytest.mark.parametrize(
        "error",
        [
            ValidationError("bad"),
            NotFoundError("missing", path="/x"),
            ParseError("row", row=3),
            FitError("degenerate"),
            InternalError("disk full"),
        ],
    )
    def test_validation_family_exit_code(self, error):
        """Test validation errors exit with 1."""
        assert error.exit_code == EXIT_VALIDATION

    def test_numeric_family_exit_code(self):
        """Test numeric errors exit with 2."""
        assert NumericalError("nan").exit_code == EXIT_DIVERGED
        assert DivergedError("nan", last_checkpoint="ckpt_epoch3.bin").exit_code == EXIT_DIVERGED

    def test_parse_error_row(self):
        """Test ParseError carries its row number."""
        error = ParseError("Manifest row 7 is malformed", row=7)
        assert error.row == 7
        assert error.to_dict()["details"] == {"row": 7}

    def test_to_dict(self):
        """Test error serialization."""
        error = ValidationError("Clean and noisy shapes differ", details={"scene_id": "s1"})
        assert error.to_dict() == {
            "error": "VALIDATION_ERROR",
            "message": "Clean and noisy shapes differ",
            "details": {"scene_id": "s1"},
        }


@pytest.mark.unit
class TestRenderError:
    """Test actionable error messages."""

    def test_render_validation(self, capsys):
        """Test rendering prints the message and returns the exit code."""
        code = render_error(NotFoundError("Checkpoint not found: a.bin", path="a.bin"))
        captured = capsys.readouterr()
        assert code == EXIT_VALIDATION
        assert "✗ NOT_FOUND: Checkpoint not found: a.bin" in captured.err
        assert "path=a.bin" in captured.err
        assert captured.out == ""

    def test_render_diverged_points_to_checkpoint(self, capsys):
        """Test divergence messages name the last good checkpoint."""
        code = render_error(DivergedError("Loss diverged", last_checkpoint="run/ckpt_epoch1.bin"))
        assert code == EXIT_DIVERGED
        assert "last good checkpoint: run/ckpt_epoch1.bin" in capsys.readouterr().err
