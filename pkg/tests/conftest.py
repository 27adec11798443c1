import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.OUTCOMES:
        return
    terminalreporter.section("acceptance")
    for k in sorted(mod.OUTCOMES):
        terminalreporter.write_line(mod.OUTCOMES[k])
