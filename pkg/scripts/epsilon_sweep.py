"""Mean accuracy of LDP and DDP-SA as the per-round budget grows.

Writes epsilon_sweep.csv into --out; accuracy should rise with epsilon.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from ddpsa.config import ExperimentConfig
from ddpsa.harness import DEFAULT_EPSILON_VALUES, sweep_epsilon, write_sweep_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--values", type=float, nargs="+", default=list(DEFAULT_EPSILON_VALUES)
    )
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--clients", type=int, default=3)
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()

    base = ExperimentConfig(n_clients=args.clients)
    rows = sweep_epsilon(base, tuple(args.values), repeats=args.repeats)
    for row in rows:
        print(
            f"eps={row.value:<4} {row.mechanism:7s} "
            f"mean loss {row.mean_test_loss:.4e}  mean R^2 {row.mean_test_r2:.6f}"
        )
    path = args.out / "epsilon_sweep.csv"
    write_sweep_csv(rows, path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
