"""Mean accuracy of LDP and DDP-SA as the client count grows.

Each client holds its own fixed-size shard, so more clients means more
total data and more noise draws averaged together; mean test loss should
fall. Adjacent client counts differ by only a few percent against large
per-seed variance, hence the high default repeat count.

Writes client_sweep.csv into --out.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from ddpsa.config import ExperimentConfig
from ddpsa.harness import DEFAULT_CLIENT_VALUES, sweep_clients, write_sweep_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--values", type=int, nargs="+", default=list(DEFAULT_CLIENT_VALUES)
    )
    parser.add_argument("--repeats", type=int, default=25)
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()

    base = ExperimentConfig(epsilon=args.epsilon)
    rows = sweep_clients(base, tuple(args.values), repeats=args.repeats)
    for row in rows:
        print(
            f"n={row.value:<2} {row.mechanism:7s} "
            f"mean loss {row.mean_test_loss:.4e}  mean R^2 {row.mean_test_r2:.6f}"
        )
    path = args.out / "client_sweep.csv"
    write_sweep_csv(rows, path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
