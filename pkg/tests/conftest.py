"""Shared pytest hooks: per-criterion summary lines for the acceptance suite."""

import pytest

CRITERIA = {
    1: "gradient integrity: every op and both full models match finite differences",
    2: "memory algebra: normalized slot weights, convex updates, one-hot/uniform limits",
    3: "toy-task learning: copy task converges; encoders compared on deletion",
    4: "search: beam-1 equals greedy, beam-10 dominates, enumeration optimality",
    5: "metrics: canonical BLEU values, SARI oracle agreement, permutation invariance",
    6: "presets: standard recipe constants match the golden snapshot",
    7: "selection rule: tuned-epoch choice matches the brute-force oracle",
    8: "checkpoints: bit-exact round-trip, identical decodes, corruption rejected",
    9: "unknown-token replacement: attention argmax with earliest-position ties",
}

_results = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(n): marks a test as part of acceptance criterion n"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(n, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_results):
        ok = all(outcome == "passed" for outcome in _results[n])
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n}: {CRITERIA[n]}")
