"""Write the synthetic input fixtures and a small run config.

    python3 scripts/make_fixtures.py [OUT_DIR] [--seed N]
"""

import argparse
from pathlib import Path

from mortsim.synthetic import write_fixtures

SMALL_CFG = """\
# Small configuration for desk runs on the synthetic fixtures.
[data]
mortality = mortality.csv
population = population_1991.csv
flows = flows.csv
fertility = fertility.csv
base_year = 1991

[train]
input_size = 15
depth = 3
hidden_width = 32
n_train = 3
batch_size = 64
interval = 200
lr0 = 0.003
steps = 2000

[forecast]
runs = 3
horizon = 2100

[simulate]
end_year = 2061
replicates = 2
scale = 5000
"""


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", nargs="?", default=str(Path(__file__).resolve().parents[1] / "fixtures"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    paths = write_fixtures(args.out, args.seed)
    cfg = Path(args.out) / "small.cfg"
    cfg.write_text(SMALL_CFG, encoding="utf-8")
    for p in [*paths.values(), cfg]:
        print(p)


if __name__ == "__main__":
    main()
