"""Run every reproduction preset and write the comparison tables to one directory."""
import argparse
import sys
from pathlib import Path

from pulsedose.cli import main


def run(out: Path) -> int:
    worst = 0
    for case in ("case-1", "case-2", "case-3", "pib"):
        print(f"== {case}")
        worst = max(worst, main(["reproduce", case, "--out", str(out)]))
    return worst


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", type=Path, default=Path("out/reproduce"))
    sys.exit(run(p.parse_args().out))
