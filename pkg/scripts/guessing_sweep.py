"""Guessed-correction SWAP success frequency across several seeds.

    python scripts/guessing_sweep.py --trials 16000 --seeds 0 1 2 3
"""
import argparse
import math
import time
from dataclasses import dataclass, field

from locc_lab.protocols import guessing_swap_experiment


@dataclass
class SweepConfig:
    trials: int = 16000
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3])


def run(cfg: SweepConfig) -> list[tuple[int, float, float]]:
    rows = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        freq = guessing_swap_experiment(cfg.trials, seed)
        rows.append((seed, freq, time.perf_counter() - t0))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=SweepConfig.trials)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    cfg = SweepConfig(**vars(ap.parse_args()))
    p = 1 / 16
    sigma = math.sqrt(p * (1 - p) / cfg.trials)
    print(f"expected {p:.5f}, sigma {sigma:.5f}")
    print(f"{'seed':>6}  {'freq':>8}  {'z':>6}  {'secs':>6}")
    for seed, freq, secs in run(cfg):
        print(f"{seed:>6}  {freq:8.5f}  {(freq - p) / sigma:6.2f}  {secs:6.2f}")


if __name__ == "__main__":
    main()
