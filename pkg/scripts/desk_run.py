"""Full pipeline on the synthetic fixtures: train, forecast, simulate, report.

    python3 scripts/desk_run.py [WORK_DIR] [--threads 4] [--seed 0]

Writes fixtures and every stage's outputs under WORK_DIR and prints the
exit code and wall time of each stage.
"""

import argparse
import sys
import time
from pathlib import Path

from mortsim import cli
from mortsim.synthetic import write_fixtures

sys.path.insert(0, str(Path(__file__).parent))
from make_fixtures import SMALL_CFG  # noqa: E402


def stages(work: Path, threads: int, seed: int):
    cfg = str(work / "fixtures" / "small.cfg")
    common = ["--config", cfg, "--threads", str(threads), "--seed", str(seed)]
    forecast = str(work / "forecast" / "forecast.csv")
    return [
        ("train", common + ["--out", str(work / "train"), "train"]),
        ("forecast", common + ["--out", str(work / "forecast"), "forecast",
                               "--sensitivity", "30", "--sensitivity", "85"]),
        ("simulate", common + ["--out", str(work / "simulate"), "simulate", "--forecast", forecast]),
        ("report", common + ["--out", str(work / "report"), "report",
                             "--from", str(work / "forecast"), "--from", str(work / "simulate")]),
    ]


def desk_run(work, threads: int = 4, seed: int = 0, echo=print) -> dict:
    """Run every stage in order; stop at the first non-zero exit. Returns {stage: (code, seconds)}."""
    work = Path(work)
    write_fixtures(work / "fixtures", seed=seed)
    (work / "fixtures" / "small.cfg").write_text(SMALL_CFG, encoding="utf-8")
    results = {}
    for name, argv in stages(work, threads, seed):
        t0 = time.time()
        code = cli.main(argv)
        results[name] = (code, time.time() - t0)
        echo(f"{name:9s} exit {code}  {results[name][1]:6.1f}s")
        if code != 0:
            break
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("work", nargs="?", default="desk_run")
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.time()
    results = desk_run(args.work, args.threads, args.seed)
    print(f"total {time.time() - t0:.1f}s; bundle in {Path(args.work) / 'report'}")
    return max(code for code, _ in results.values())


if __name__ == "__main__":
    sys.exit(main())
