"""Shared fixtures: the packaged dataset, the shipped format descriptions,
and the session-wide reference simulations the acceptance checks read.

The million-iteration fixtures are session-scoped and lazy, so running a
single unit-test module never pays for them.  Every reference run uses
master seed 0 and one partition; re-running the suite reproduces the exact
same tallies.
"""
from __future__ import annotations

import pytest

from clqsim.analysis import probabilities, sensitivity_sweep
from clqsim.data import builtin_format, load_fixtures
from clqsim.mc import DEFAULT_CHECKPOINTS, RunConfig, SamplingPolicy, run

ACCEPTANCE_ITERS = 1_000_000

_criterion_lines: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collector for the one-line verdicts printed after the run."""

    def note(number: int, ok: bool, detail: str) -> None:
        verdict = "PASS" if ok else "FAIL"
        _criterion_lines.append(f"criterion {number:2d} {verdict}: {detail}")

    return note


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def dataset():
    return load_fixtures()


@pytest.fixture(scope="session")
def fmt_old():
    return builtin_format("pre2018")


@pytest.fixture(scope="session")
def fmt_new():
    return builtin_format("post2018")


@pytest.fixture(scope="session")
def both_formats(fmt_old, fmt_new):
    return (fmt_old, fmt_new)


@pytest.fixture(scope="session")
def baseline_config(both_formats):
    return RunConfig(iterations=ACCEPTANCE_ITERS, master_seed=0, formats=both_formats)


@pytest.fixture(scope="session")
def baseline_tally(baseline_config, dataset):
    return run(baseline_config, dataset, checkpoints=DEFAULT_CHECKPOINTS)


@pytest.fixture(scope="session")
def baseline_report(baseline_tally):
    return probabilities(baseline_tally)


@pytest.fixture(scope="session")
def unseeded_tally(fmt_new, dataset):
    config = RunConfig(
        iterations=ACCEPTANCE_ITERS,
        master_seed=0,
        seeding_mode="unseeded-random",
        formats=(fmt_new,),
    )
    return run(config, dataset)


@pytest.fixture(scope="session")
def sensitivity_reports(baseline_config, dataset):
    return sensitivity_sweep(baseline_config, dataset, (600.0, 800.0))


@pytest.fixture(scope="session")
def weighted_report(both_formats, dataset):
    config = RunConfig(
        iterations=ACCEPTANCE_ITERS,
        master_seed=0,
        policy=SamplingPolicy.weighted(),
        formats=both_formats,
    )
    return probabilities(run(config, dataset))
