"""Final accuracy of all four mechanisms, averaged over seeds.

Writes accuracy.csv into --out and prints one line per mechanism.
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from ddpsa.config import ExperimentConfig
from ddpsa.harness import run_with_repeats


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10, help="repeats per mechanism")
    parser.add_argument("--epsilon", type=float, default=0.1)
    parser.add_argument("--clients", type=int, default=3)
    parser.add_argument("--rounds", type=int, default=3000)
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for mech in ("no_private", "ldp", "mpc", "ddp_sa"):
        cfg = ExperimentConfig(
            mechanism=mech,
            n_clients=args.clients,
            epsilon=args.epsilon,
            T_max=args.rounds,
        )
        result = run_with_repeats(cfg, args.seeds)
        losses = np.array(result.final_test_losses)
        rows.append(
            {
                "mechanism": mech,
                "seeds": args.seeds,
                "mean_test_loss": result.mean_test_loss,
                "std_test_loss": float(losses.std(ddof=1)) if args.seeds > 1 else 0.0,
                "mean_test_r2": result.mean_test_r2,
                "mean_rounds": result.mean_rounds_total,
            }
        )
        print(
            f"{mech:11s} mean loss {result.mean_test_loss:.4e}  "
            f"mean R^2 {result.mean_test_r2:.6f}  "
            f"mean rounds {result.mean_rounds_total:.1f}"
        )

    path = args.out / "accuracy.csv"
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
