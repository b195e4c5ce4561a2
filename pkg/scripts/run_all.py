"""Run every shipped config through the CLI and replay it at 1 and 8 workers."""

import argparse
import sys
from pathlib import Path

from fibermetric.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out_root: Path) -> int:
    bad = 0
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        out = out_root / cfg.stem
        code = main(["run", str(cfg), "--out", str(out), "--workers", "1"])
        replays = [main(["replay", str(out), "--workers", str(w)]) for w in (1, 8)]
        print(f"{cfg.name}: run {code}, replay {replays}")
        bad += code != 0 or any(replays)
    return 1 if bad else 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    sys.exit(run(Path(ap.parse_args().out)))
