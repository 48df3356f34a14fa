import json
import os
import tempfile
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

# keep product-CDF tables out of the user's cache during tests
os.environ.setdefault("RFFSO_CACHE_DIR", os.path.join(tempfile.gettempdir(), "rffso-test-cache"))


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
