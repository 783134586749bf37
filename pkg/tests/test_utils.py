# type: ignore

"""
Unit tests for utils.py

Tests filename sanitizing for comparison outputs, worker thread resolution,
stage timing and logging setup.
"""

import logging
import pytest
import sys
import os

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from utils import (
    progress_enabled,
    resolve_threads,
    sanitize_filename,
    setup_logging,
    stage_timer,
)


class TestSanitizeFilename:
    """Test suite for sanitize_filename function"""

    def test_valid_filename_unchanged(self):
        """Test that valid filenames pass through unchanged"""
        assert sanitize_filename("comparison.csv") == "comparison.csv"

    def test_mode_name_with_plus_sign(self):
        """Test that the tsp+cyl mode label becomes a safe stem"""
        assert sanitize_filename("tsp+cyl seed 3.csv") == "tsp_cyl_seed_3.csv"

    def test_dashes_preserved(self):
        """Test that dashes in dates and seed ranges are kept"""
        assert sanitize_filename("run-2024-01.csv") == "run-2024-01.csv"

    def test_special_characters_removed(self):
        """Test that special characters like !, @, # are removed"""
        assert sanitize_filename("file!@#$%.txt") == "file.txt"

    def test_slashes_replaced(self):
        """Test that slashes are replaced"""
        assert sanitize_filename("out/seed/0.csv") == "out_seed_0.csv"

    def test_leading_trailing_underscores_removed(self):
        """Test that underscores at start/end are removed"""
        assert sanitize_filename("___file___.json") == "file.json"

    def test_empty_string_handling(self):
        """Test that empty string input returns empty string"""
        assert sanitize_filename("") == ""

    def test_invalid_type_raises_error(self):
        """Test that non-string input raises TypeError"""
        with pytest.raises(TypeError):
            sanitize_filename(123)

        with pytest.raises(TypeError):
            sanitize_filename(None)


class TestResolveThreads:
    """Test suite for worker thread resolution"""

    def test_explicit_value_wins(self, monkeypatch):
        """Test that an explicit value overrides the environment"""
        monkeypatch.setenv("TUBETRACK_THREADS", "7")
        assert resolve_threads(3) == 3

    def test_environment_fallback(self, monkeypatch):
        """Test that TUBETRACK_THREADS is used when no value is given"""
        monkeypatch.setenv("TUBETRACK_THREADS", "5")
        assert resolve_threads() == 5

    def test_cpu_count_fallback(self, monkeypatch):
        """Test that the CPU count is used without value or environment"""
        monkeypatch.delenv("TUBETRACK_THREADS", raising=False)
        assert resolve_threads() >= 1

    def test_invalid_value_raises(self):
        """Test that zero threads are rejected"""
        with pytest.raises(ValueError):
            resolve_threads(0)


class TestStageTimer:
    """Test suite for stage timing and logging helpers"""

    def test_summary_logged(self, caplog):
        """Test that the stage summary items appear in the finish line"""
        caplog.set_level(logging.INFO)
        with stage_timer("supervoxels") as info:
            info["supervoxels"] = 42
        messages = " ".join(record.getMessage() for record in caplog.records)
        assert "stage supervoxels finished" in messages
        assert "supervoxels=42" in messages

    def test_summary_dict_filled_in_place(self):
        """Test that a caller-provided dict receives the stage details"""
        summary = {}
        with stage_timer("graph", summary) as info:
            info["edges"] = 10
        assert summary == {"edges": 10}

    def test_setup_logging_returns_level(self):
        """Test that level names are converted to numeric levels"""
        assert setup_logging("warning") == logging.WARNING
        assert not progress_enabled()
        assert setup_logging("debug") == logging.DEBUG
        assert progress_enabled()
        setup_logging("info")
