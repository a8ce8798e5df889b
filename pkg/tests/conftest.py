"""Shared fixtures; the full RMSE benchmark runs once per session."""

import time

import pytest

from epsde.cli import cmd_benchmark, load_config

BENCHMARK_YAML = """\
model: lv
grid: {n_steps: 1500}
observations:
  count: 10
  model: {kind: log_normal, variance: 750.0}
benchmark: {variances: [500.0, 750.0, 1000.0], replicates: 40}
seed: 20250819
"""

acceptance_verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance verdict lines outside output capture."""
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.line(line)


@pytest.fixture(scope="session")
def lv_benchmark(tmp_path_factory):
    """Full three-variance, 40-replicate comparison plus its wall time.

    Shared between the CLI contract tests and the acceptance gate so
    the expensive sweep runs once.
    """
    root = tmp_path_factory.mktemp("bench")
    cfg_path = root / "bench.yaml"
    cfg_path.write_text(BENCHMARK_YAML)
    cfg = load_config(cfg_path)
    started = time.perf_counter()
    report = cmd_benchmark(cfg, out=root / "out")
    elapsed = time.perf_counter() - started
    return {"report": report, "seconds": elapsed, "out": root / "out",
            "config": cfg}
