#!/usr/bin/env python3
"""Convergence table for Shapes 1-3: thresholds, tested k, error and verdict."""

import sys

from helmpoisson.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "table1", "--shapes", "1,2,3", "--h", "0.01", "--N", "30",
                   "--out", "out/table1", *sys.argv[1:]]))
