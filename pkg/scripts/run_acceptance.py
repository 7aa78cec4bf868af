"""Run the acceptance suite and print one PASS/FAIL line per criterion.

    python3 scripts/run_acceptance.py [--fast]    # --fast skips criteria 8 and 11
"""
import sys

import pytest

if __name__ == "__main__":
    args = ["-q", "tests/test_acceptance.py"]
    if "--fast" in sys.argv:
        args += ["-m", "not slow"]
    sys.exit(pytest.main(args))
