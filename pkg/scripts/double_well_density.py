"""EM histogram of the double well against its Gibbs density (TV, left-well mass).

Usage: python scripts/double_well_density.py [--workers N] [--out DIR]
"""
import sys

from sdecert.cli import main

if __name__ == "__main__":
    sys.exit(main(["validate", "--example", "double-well", "--scale", "desk"] + sys.argv[1:]))
