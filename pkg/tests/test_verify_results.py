# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
"""
Tests for scripts/verify_results.py.

Run with: pytest tests/test_verify_results.py -v
"""

import importlib.util
from pathlib import Path

import pytest

SCRIPT_PATH = Path(__file__).parent.parent / "scripts" / "verify_results.py"


@pytest.fixture(scope="module")
def verify_results():
    """Load the verification script as a module."""
    spec = importlib.util.spec_from_file_location("verify_results", SCRIPT_PATH)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestResultVerifier:
    """The identities re-derived by the script hold."""

    def test_quick_run_passes(self, verify_results):
        """A quick run passes every check it does not skip."""
        report = verify_results.ResultVerifier(grid_n=3000).run_all(quick=True)
        failures = [r for r in report.results if not r.passed and not r.message.startswith("SKIPPED")]
        assert not failures, f"Failed checks: {[(r.name, r.message) for r in failures]}"
        assert report.skipped == 2
        assert not report.has_critical_failure

    def test_report_dict(self, verify_results):
        """The JSON report summarises PASS and lists every result."""
        report = verify_results.ResultVerifier(grid_n=3000).run_all(quick=True)
        data = report.to_dict()
        assert data["summary"]["status"] == "PASS"
        assert len(data["results"]) == report.passed + report.failed + report.skipped

    def test_exception_becomes_failure(self, verify_results):
        """A check that raises becomes a critical failure."""
        verifier = verify_results.ResultVerifier()

        @verifier.check("Broken", critical=True)
        def run():
            raise RuntimeError("boom")

        result = run()
        assert not result.passed
        assert "boom" in result.message
        assert verifier.report.has_critical_failure
