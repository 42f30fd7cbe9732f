"""Experiment orchestration: repeats, sweeps, file outputs, cost model.

Output contract: a run writes <out>/rounds.csv (one row per round) and
<out>/summary.json; a sweep writes <out>/sweep.csv. The CSV files are
byte-identical across runs of the same configuration on one platform, so
wall-clock timing stays out of them; timings live in the JSON summary,
which makes no determinism promise.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .learning import MODEL_DIMENSION
from .protocol import TrainingReport, run_training

log = logging.getLogger("ddpsa.harness")

ROUNDS_CSV_COLUMNS = (
    "round",
    "train_loss",
    "val_loss",
    "test_loss",
    "test_r2",
    "uplink_values_per_client",
)

SWEEP_CSV_COLUMNS = (
    "axis",
    "value",
    "mechanism",
    "repeats",
    "mean_test_loss",
    "mean_test_r2",
    "mean_rounds_total",
)

DEFAULT_EPSILON_VALUES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_CLIENT_VALUES = (2, 3, 4, 5, 6)
DEFAULT_SWEEP_MECHANISMS = ("ldp", "ddp_sa")


def write_rounds_csv(report: TrainingReport, path) -> None:
    """Per-round metrics; floats via repr so rereads are exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUNDS_CSV_COLUMNS)
        for row in report.rows:
            writer.writerow(
                [
                    row.round,
                    repr(row.train_loss),
                    repr(row.val_loss),
                    repr(row.test_loss),
                    repr(row.test_r2),
                    row.uplink_values_per_client,
                ]
            )


def summarize(report: TrainingReport) -> dict:
    privacy = None
    if report.privacy_spent_basic is not None:
        privacy = {
            "rounds": report.rounds_total,
            "basic_epsilon": report.privacy_spent_basic[0],
            "basic_delta": report.privacy_spent_basic[1],
            "advanced_epsilon": report.privacy_spent_advanced[0],
            "advanced_delta": report.privacy_spent_advanced[1],
            "delta_prime": report.delta_prime,
        }
    return {
        "mechanism": report.mechanism,
        "config": dataclasses.asdict(report.config),
        "rounds_total": report.rounds_total,
        "converged": report.converged,
        "rounds_to_convergence": report.rounds_to_convergence,
        "final_theta": list(report.final_theta),
        "final_train_loss": report.final_train_loss,
        "final_val_loss": report.final_val_loss,
        "final_test_loss": report.final_test_loss,
        "final_test_r2": report.final_test_r2,
        "sensitivity": report.sensitivity,
        "privacy": privacy,
        "uplink_values_per_client": report.uplink_values_per_client,
        "wall_seconds": report.wall_seconds,
    }


def write_summary_json(summary: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ----------------------------------------------------------------- repeats

@dataclass
class RepeatResult:
    """Final metrics averaged over seeds seed..seed+repeats-1."""

    config: ExperimentConfig
    repeats: int
    seeds: tuple[int, ...]
    mean_test_loss: float
    mean_test_r2: float
    mean_rounds_total: float
    first_report: TrainingReport
    final_test_losses: tuple[float, ...]
    final_test_r2s: tuple[float, ...]


def run_with_repeats(config: ExperimentConfig, repeats: int = 1) -> RepeatResult:
    """Average final metrics over consecutive seeds; keep round curves from the first."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    seeds = tuple(config.seed + r for r in range(repeats))
    reports = []
    for s in seeds:
        reports.append(run_training(config.with_overrides(seed=s)))
        log.info(
            "seed %d: %s rounds=%d test_r2=%.6f",
            s, config.mechanism, reports[-1].rounds_total, reports[-1].final_test_r2,
        )
    losses = tuple(r.final_test_loss for r in reports)
    r2s = tuple(r.final_test_r2 for r in reports)
    return RepeatResult(
        config=config,
        repeats=repeats,
        seeds=seeds,
        mean_test_loss=float(np.mean(losses)),
        mean_test_r2=float(np.mean(r2s)),
        mean_rounds_total=float(np.mean([r.rounds_total for r in reports])),
        first_report=reports[0],
        final_test_losses=losses,
        final_test_r2s=r2s,
    )


# ------------------------------------------------------------------ sweeps

@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    mechanism: str
    repeats: int
    mean_test_loss: float
    mean_test_r2: float
    mean_rounds_total: float


def _sweep(
    base: ExperimentConfig,
    axis: str,
    values: Sequence,
    mechanisms: Sequence[str],
    repeats: int,
) -> list[SweepRow]:
    rows = []
    for mech in mechanisms:
        for value in values:
            cfg = base.with_overrides(**{"mechanism": mech, axis: value})
            result = run_with_repeats(cfg, repeats)
            rows.append(
                SweepRow(
                    axis="epsilon" if axis == "epsilon" else "clients",
                    value=value,
                    mechanism=mech,
                    repeats=repeats,
                    mean_test_loss=result.mean_test_loss,
                    mean_test_r2=result.mean_test_r2,
                    mean_rounds_total=result.mean_rounds_total,
                )
            )
            log.info(
                "sweep %s=%s %s: mean r2 %.6f", axis, value, mech, result.mean_test_r2
            )
    return rows


def sweep_epsilon(
    base: ExperimentConfig,
    values: Sequence[float] = DEFAULT_EPSILON_VALUES,
    mechanisms: Sequence[str] = DEFAULT_SWEEP_MECHANISMS,
    repeats: int = 5,
) -> list[SweepRow]:
    return _sweep(base, "epsilon", values, mechanisms, repeats)


def sweep_clients(
    base: ExperimentConfig,
    values: Sequence[int] = DEFAULT_CLIENT_VALUES,
    mechanisms: Sequence[str] = DEFAULT_SWEEP_MECHANISMS,
    repeats: int = 5,
) -> list[SweepRow]:
    return _sweep(base, "n_clients", values, mechanisms, repeats)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.axis,
                    repr(row.value) if isinstance(row.value, float) else row.value,
                    row.mechanism,
                    row.repeats,
                    repr(row.mean_test_loss),
                    repr(row.mean_test_r2),
                    repr(row.mean_rounds_total),
                ]
            )


# -------------------------------------------------------------- cost model

# wire overhead per frame: 4-byte length + 1-byte type
_FRAME = 5
# payload header bytes by message family
_BROADCAST_HEADER = 8
_SHARE_HEADER = 18
_PARTIAL_HEADER = 10
_PLAIN_HEADER = 12


@dataclass(frozen=True)
class CostRow:
    link: str
    description: str
    reference_bytes: int
    wire_bytes: int
    excluded: bool


def cost_model(d: int = MODEL_DIMENSION, m: int = 3, n: int = 3) -> list[CostRow]:
    """Per-round communication volumes.

    reference_bytes follows the reference accounting convention of 4 bytes per
    value, under which the parameter server's ingress drops from 4nd
    (plaintext uploads) to 4md (partial sums). wire_bytes counts what this
    implementation actually puts on the wire: 8-byte doubles, 16-byte field
    elements, and per-frame headers. Client-to-intermediate traffic is
    excluded from the reference totals; it is reported here anyway, marked.
    """
    if d < 1 or m < 1 or n < 1:
        raise ValueError(f"d, m, n must all be >= 1, got {(d, m, n)}")
    return [
        CostRow(
            link="ps_to_client",
            description="model broadcast, per client",
            reference_bytes=4 * d,
            wire_bytes=_FRAME + _BROADCAST_HEADER + 8 * d,
            excluded=False,
        ),
        CostRow(
            link="client_to_intermediates",
            description="share uploads, per client, all m servers",
            reference_bytes=4 * d * m,
            wire_bytes=m * (_FRAME + _SHARE_HEADER + 16 * d),
            excluded=True,
        ),
        CostRow(
            link="intermediates_to_ps",
            description="partial sums, total per round",
            reference_bytes=4 * d * m,
            wire_bytes=m * (_FRAME + _PARTIAL_HEADER + 16 * d),
            excluded=False,
        ),
        CostRow(
            link="plaintext_uplink",
            description="plain gradient uploads, total per round",
            reference_bytes=4 * d * n,
            wire_bytes=n * (_FRAME + _PLAIN_HEADER + 8 * d),
            excluded=False,
        ),
    ]


def write_cost_csv(rows: Sequence[CostRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["link", "description", "reference_bytes", "wire_bytes", "excluded"])
        for row in rows:
            writer.writerow(
                [row.link, row.description, row.reference_bytes, row.wire_bytes, row.excluded]
            )


def write_run_outputs(report: TrainingReport, out_dir, extra: Optional[dict] = None) -> dict:
    """rounds.csv + summary.json into out_dir; returns the summary dict."""
    out = Path(out_dir)
    write_rounds_csv(report, out / "rounds.csv")
    summary = summarize(report)
    if extra:
        summary.update(extra)
    write_summary_json(summary, out / "summary.json")
    return summary
