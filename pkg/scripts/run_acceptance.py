"""Run the acceptance suite and print one PASS/FAIL line per criterion."""
import subprocess
import sys
from pathlib import Path

if __name__ == "__main__":
    suite = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", "-q", str(suite)]))
