#!/usr/bin/env python3
"""Monte Carlo exit and local times against the finite-difference fields at probe nodes."""

import sys

from helmpoisson.cli import main

if __name__ == "__main__":
    sys.exit(main(["run", "mc_validate", "--shapes", "1,2,3", "--paths", "10000", "--probes", "5",
                   "--out", "out/mc_validate", *sys.argv[1:]]))
