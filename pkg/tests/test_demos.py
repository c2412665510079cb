import subprocess
import sys
from pathlib import Path

import pytest

DEMOS = sorted((Path(__file__).parent.parent / "demos").glob("*.py"))


@pytest.mark.parametrize("script", DEMOS, ids=lambda p: p.stem)
def test_demo_runs(script):
    done = subprocess.run([sys.executable, str(script)], capture_output=True, text=True, timeout=60)
    assert done.returncode == 0, done.stderr


def test_expected_demo_lines():
    root = Path(__file__).parent.parent / "demos"
    out = subprocess.run([sys.executable, str(root / "energy_report.py")], capture_output=True, text=True).stdout
    for s in ["24.0 W", "8.2 W", "65.8%", "83.16%"]:
        assert s in out
    out = subprocess.run([sys.executable, str(root / "edge_offload.py")], capture_output=True, text=True).stdout
    assert out.count("identical: True") == 2
