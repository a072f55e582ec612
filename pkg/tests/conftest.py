import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=40
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_bath():
    from nvdnp.bathgen import preset_bath

    return preset_bath("acceptance")


_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record and print one pass/fail line per acceptance criterion."""

    def _report(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
