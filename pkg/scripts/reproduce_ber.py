"""BER curves for all precoders on the (2,2,2,2)x8 layout.

Usage: python scripts/reproduce_ber.py [OUT_DIR] [TRIALS]
"""

import sys

from mimo_precode.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/ber"
    trials = sys.argv[2] if len(sys.argv) > 2 else "10000"
    sys.exit(main(["ber", "--ebn0", "0:2:30", "--trials", trials, "--kinds", "all", "--out", out]))
