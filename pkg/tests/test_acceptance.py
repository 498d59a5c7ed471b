"""The ten acceptance criteria at their stated tolerances, one test each.

Each test prints its ``[PASS]``/``[FAIL]`` line straight to the terminal.  The
shared JKO/FV runs are computed once, in parallel over up to six processes.
"""
import os

import pytest

from jkoentropy.harness.acceptance import CRITERIA, run_criteria, set_jobs

JOBS = max(1, min(6, os.cpu_count() or 1))


@pytest.fixture(scope="module", autouse=True)
def _parallel_runs():
    set_jobs(JOBS)


@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(cid, capsys):
    (result,) = run_criteria([cid], jobs=JOBS)
    with capsys.disabled():
        print("\n" + result.text())
    assert result.passed, result.text()
