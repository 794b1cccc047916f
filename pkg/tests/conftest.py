"""Session fixtures: synthetic corpora and reference bases built once.

All corpora come from tests/synth.py with fixed seeds, so every run sees
identical pixel data without binary fixtures in the repository.
"""

import numpy as np
import pytest

import acceptance_report
import synth
from curate.blockiness import measure_file
from curate.quality import build_basis


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """Guarantee a FAIL verdict line when a criterion test dies early."""
    outcome = yield
    report = outcome.get_result()
    if report.when != "call" or not report.failed:
        return
    if not item.name.startswith("test_criterion_"):
        return
    parts = item.name.split("_")
    tag = f"criterion {parts[2]}"
    if tag not in acceptance_report.TAGS:
        acceptance_report.record(
            False,
            f"{tag} ({' '.join(parts[3:])})",
            "aborted before its checks completed; see the traceback above",
        )


def pytest_terminal_summary(terminalreporter):
    """Print one PASS/FAIL line per acceptance criterion after capture ends."""
    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def reference_corpus(tmp_path_factory):
    """20 clean 256x256 PNGs used to build the main basis."""
    root = tmp_path_factory.mktemp("reference")
    synth.build_reference_corpus(root)
    return root


@pytest.fixture(scope="session")
def heldout_sets(tmp_path_factory):
    """Held-out clean images saved as JPEG at each quality level."""
    root = tmp_path_factory.mktemp("heldout")
    synth.build_heldout_sets(root)
    return root


@pytest.fixture(scope="session")
def run_corpus(tmp_path_factory):
    """Two toy sources (clean/, degraded/) plus ref/ for pipeline runs."""
    root = tmp_path_factory.mktemp("runcorpus")
    synth.build_run_corpus(root)
    return root


@pytest.fixture(scope="session")
def cli_corpus(tmp_path_factory):
    """Small textured image set for CLI subcommand tests."""
    root = tmp_path_factory.mktemp("clicorpus")
    synth.build_cli_corpus(root)
    return root


@pytest.fixture(scope="session")
def basis96(run_corpus):
    """Small basis built from the 96x96 pipeline reference set."""
    paths = sorted((run_corpus / "ref").glob("*.png"))
    return build_basis(paths, reference_name="ref96")


@pytest.fixture(scope="session")
def ref96_samples(run_corpus):
    """Per-quality blockiness samples of the 96x96 reference set."""
    paths = sorted((run_corpus / "ref").glob("*.png"))
    return {
        q: np.array([measure_file(p, recompress_q=q) for p in paths])
        for q in synth.QUALITY_LEVELS
    }
