"""Mean sum-rate curves, including water-filled BD and RBD.

Usage: python scripts/reproduce_sumrate.py [OUT_DIR] [CHANNELS]
"""

import sys

from mimo_precode.cli import main

KINDS = "bd,bd-wf,rbd,rbd-wf,qrsvd-rbd,sgmi,lr-sgmi-zf,lr-sgmi-mmse"

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "results/sumrate"
    channels = sys.argv[2] if len(sys.argv) > 2 else "1000"
    sys.exit(main(["sumrate", "--ebn0", "0:2:30", "--trials", channels, "--kinds", KINDS, "--out", out]))
