#!/usr/bin/env python3
"""Alternative iteration on Shape 1 and the waveguide certificates with the m = 1 sweep."""

import sys

from helmpoisson.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    code = main(["run", "appendixA", "--shape", "1", "--h", "0.01", "--paths", "2000",
                 "--out", "out/appendixA", *extra])
    code |= main(["run", "appendixB", "--L-wid", "0.5", "--out", "out/appendixB", *extra])
    sys.exit(code)
