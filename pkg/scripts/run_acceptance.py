"""Train every run the relative-performance acceptance criteria need.

Usage: python3 scripts/run_acceptance.py [maze|disentangle2d|all] [--jobs N]

Finished runs are skipped; interrupted ones resume from their last checkpoint.
"""
import argparse
import logging
from concurrent.futures import ProcessPoolExecutor

from arlab import experiments
from arlab.runner import run


def _one(cfg):
    return str(run(cfg, experiments.DEFAULT_ROOT))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("which", nargs="?", default="all", choices=["maze", "disentangle2d", "all"])
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    configs = [c for c in experiments.all_configs() if args.which in ("all", c["env"]["kind"])]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            for d in pool.map(_one, configs):
                print(d, flush=True)
    else:
        for c in configs:
            print(_one(c), flush=True)


if __name__ == "__main__":
    main()
