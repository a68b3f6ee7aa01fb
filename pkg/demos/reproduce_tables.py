"""Print both simulation grids as markdown.

The default uses 500 replications per cell so it finishes in a couple of
minutes; pass ``--reps 10000`` for the full grids.
"""

from __future__ import annotations

import argparse

from rwr.cli import render_grid
from rwr.montecarlo import run_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=500)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()
    for which in (1, 2):
        print(render_grid(run_table(which, reps=args.reps, threads=args.threads), "markdown"))
        print()


if __name__ == "__main__":
    main()
