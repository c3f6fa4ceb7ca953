#!/usr/bin/env python3
"""Decay of sup|v_n| + sup|w_n| at k = k* for Shapes 1-3."""

import sys

from helmpoisson.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "fig5", "--shapes", "1,2,3", "--h", "0.01", "--out", "out/fig5", *sys.argv[1:]]))
