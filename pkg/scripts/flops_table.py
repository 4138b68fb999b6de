"""Mean operation counts per precoder and the LR-S-GMI-MMSE reductions.

Usage: python scripts/flops_table.py [OUT_DIR] [CHANNELS]
"""

import sys

from mimo_precode.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/flops"
    channels = sys.argv[2] if len(sys.argv) > 2 else "1000"
    sys.exit(main(["flops", "--ebn0", "15", "--trials", channels, "--out", out]))
