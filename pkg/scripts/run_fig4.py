#!/usr/bin/env python3
"""Spectral radius of the iteration matrix against k on the square with a square hole."""

import sys

from helmpoisson.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "fig4", "--out", "out/fig4", *sys.argv[1:]]))
