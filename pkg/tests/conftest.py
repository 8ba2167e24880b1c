import contextlib

from hypothesis import HealthCheck, settings

# Reproducible property tests: fixed example stream, no timing flake.
settings.register_profile(
    "repro",
    derandomize=True,
    database=None,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")

# Acceptance results keyed by criterion number; filled by test_acceptance.
RESULTS = {}


@contextlib.contextmanager
def criterion(num, description):
    """Record PASS only if the body runs to completion."""
    RESULTS[num] = (description, False)
    yield
    RESULTS[num] = (description, True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        description, ok = RESULTS[num]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict} - {description}")
