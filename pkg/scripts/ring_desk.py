"""Ring example at desk scale: finite-time error, contraction, certified and rough bounds.

Usage: python scripts/ring_desk.py [--workers N] [--out DIR]
"""
import sys

from sdecert.cli import main

if __name__ == "__main__":
    sys.exit(main(["reproduce", "ring", "--scale", "desk"] + sys.argv[1:]))
