"""Command line interface.

Subcommands: run, sweep, accountant, cost-model, gen-data. Set DDPSA_LOG
to error, warn, info, or debug to control log verbosity.
"""
from __future__ import annotations

import logging
import os
from pathlib import Path

import click

from .config import ALLOCATIONS, MECHANISMS, TRANSPORTS, ConvergenceRule, ExperimentConfig
from .errors import DdpsaError
from .harness import (
    DEFAULT_CLIENT_VALUES,
    DEFAULT_EPSILON_VALUES,
    cost_model,
    run_with_repeats,
    summarize,
    sweep_clients,
    sweep_epsilon,
    write_cost_csv,
    write_run_outputs,
    write_sweep_csv,
)
from .learning import generate_dataset, write_dataset_csv
from .privacy import allocate_budget, compose_advanced, compose_basic, DpParams

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


@click.group()
def main() -> None:
    """Federated training with noised, secret-shared gradient aggregation."""
    level = os.environ.get("DDPSA_LOG", "warn").lower()
    if level not in _LOG_LEVELS:
        raise click.UsageError(
            f"DDPSA_LOG must be one of {sorted(_LOG_LEVELS)}, got {level!r}"
        )
    logging.basicConfig(level=_LOG_LEVELS[level], format="%(name)s %(levelname)s %(message)s")


def _build_config(
    mechanism, clients, servers, epsilon, dn, rounds, seed, transport,
    samples_per_client, warmup_rounds, rel_tol, patience, allocation, alpha, out,
) -> ExperimentConfig:
    if servers is not None and mechanism in ("no_private", "ldp"):
        raise click.UsageError(
            f"--servers has no effect for the {mechanism} mechanism; drop the flag"
        )
    try:
        return ExperimentConfig(
            mechanism=mechanism,
            n_clients=clients,
            m_servers=3 if servers is None else servers,
            epsilon=epsilon,
            d_n=dn,
            T_max=rounds,
            seed=seed,
            transport=transport,
            samples_per_client=samples_per_client,
            warmup_rounds=warmup_rounds,
            convergence=ConvergenceRule(rel_tol=rel_tol, patience=patience),
            allocation=allocation,
            alpha=alpha,
            output_dir=out,
        )
    except DdpsaError as exc:
        raise click.UsageError(str(exc)) from exc


_shared_options = [
    click.option("--mechanism", type=click.Choice(MECHANISMS), default="ddp_sa", show_default=True),
    click.option("--clients", type=int, default=3, show_default=True, help="number of clients n"),
    click.option("--servers", type=int, default=None, help="intermediate servers m [default: 3]"),
    click.option("--epsilon", type=float, default=0.1, show_default=True, help="per-round privacy budget"),
    click.option("--dn", type=int, default=10, show_default=True, help="fixed-point fractional digits"),
    click.option("--rounds", type=int, default=3000, show_default=True, help="maximum training rounds"),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--transport", type=click.Choice(TRANSPORTS), default="sim", show_default=True),
    click.option("--samples-per-client", type=int, default=2000, show_default=True),
    click.option("--warmup-rounds", type=int, default=50, show_default=True),
    click.option("--rel-tol", type=float, default=1e-6, show_default=True),
    click.option("--patience", type=int, default=50, show_default=True),
    click.option("--allocation", type=click.Choice(ALLOCATIONS), default="uniform", show_default=True),
    click.option("--alpha", type=float, default=None, help="decay for adaptive allocation"),
]


def shared_options(fn):
    for opt in reversed(_shared_options):
        fn = opt(fn)
    return fn


@main.command()
@shared_options
@click.option("--repeats", type=int, default=1, show_default=True, help="average over seeds seed..seed+R-1")
@click.option("--out", type=click.Path(), default="out", show_default=True)
def run(mechanism, clients, servers, epsilon, dn, rounds, seed, transport,
        samples_per_client, warmup_rounds, rel_tol, patience, allocation, alpha,
        repeats, out):
    """Train once (or averaged over repeats); write rounds.csv and summary.json."""
    config = _build_config(
        mechanism, clients, servers, epsilon, dn, rounds, seed, transport,
        samples_per_client, warmup_rounds, rel_tol, patience, allocation, alpha, out,
    )
    try:
        result = run_with_repeats(config, repeats)
    except DdpsaError as exc:
        raise click.ClickException(str(exc)) from exc
    extra = None
    if repeats > 1:
        extra = {
            "repeats": {
                "count": repeats,
                "seeds": list(result.seeds),
                "mean_test_loss": result.mean_test_loss,
                "mean_test_r2": result.mean_test_r2,
                "mean_rounds_total": result.mean_rounds_total,
            }
        }
    summary = write_run_outputs(result.first_report, out, extra)
    report = result.first_report
    click.echo(f"mechanism            {report.mechanism}")
    click.echo(f"rounds               {report.rounds_total}")
    click.echo(f"converged            {report.converged}")
    click.echo(f"final test loss      {result.mean_test_loss:.6e}" + (" (mean)" if repeats > 1 else ""))
    click.echo(f"final test R^2       {result.mean_test_r2:.6f}" + (" (mean)" if repeats > 1 else ""))
    click.echo(f"uplink values/client {report.uplink_values_per_client}")
    if summary["privacy"] is not None:
        click.echo(f"privacy basic eps    {summary['privacy']['basic_epsilon']:.6g}")
        click.echo(f"privacy advanced eps {summary['privacy']['advanced_epsilon']:.6g}")
    click.echo(f"wrote {Path(out) / 'rounds.csv'} and {Path(out) / 'summary.json'}")


@main.command()
@shared_options
@click.option("--axis", type=click.Choice(["epsilon", "clients"]), required=True)
@click.option("--values", type=str, default=None,
              help="comma-separated axis values [default: 0.1..0.6 or 2..6]")
@click.option("--mechanisms", type=str, default="ldp,ddp_sa", show_default=True,
              help="comma-separated mechanisms to sweep")
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--out", type=click.Path(), default="out", show_default=True)
def sweep(mechanism, clients, servers, epsilon, dn, rounds, seed, transport,
          samples_per_client, warmup_rounds, rel_tol, patience, allocation, alpha,
          axis, values, mechanisms, repeats, out):
    """Sweep epsilon or the client count; write sweep.csv."""
    base = _build_config(
        mechanism, clients, servers, epsilon, dn, rounds, seed, transport,
        samples_per_client, warmup_rounds, rel_tol, patience, allocation, alpha, out,
    )
    mechs = tuple(m.strip() for m in mechanisms.split(",") if m.strip())
    for m in mechs:
        if m not in MECHANISMS:
            raise click.UsageError(f"unknown mechanism {m!r} in --mechanisms")
    try:
        if axis == "epsilon":
            vals = (
                tuple(float(v) for v in values.split(","))
                if values else DEFAULT_EPSILON_VALUES
            )
            rows = sweep_epsilon(base, vals, mechs, repeats)
        else:
            vals = (
                tuple(int(v) for v in values.split(","))
                if values else DEFAULT_CLIENT_VALUES
            )
            rows = sweep_clients(base, vals, mechs, repeats)
    except DdpsaError as exc:
        raise click.ClickException(str(exc)) from exc
    except ValueError as exc:
        raise click.UsageError(f"bad --values: {exc}") from exc
    path = Path(out) / "sweep.csv"
    write_sweep_csv(rows, path)
    for row in rows:
        click.echo(
            f"{row.axis}={row.value} {row.mechanism}: "
            f"mean test loss {row.mean_test_loss:.6e}, mean R^2 {row.mean_test_r2:.6f}"
        )
    click.echo(f"wrote {path}")


@main.command()
@click.option("--epsilon", type=float, required=True, help="per-round budget")
@click.option("--delta", type=float, default=0.0, show_default=True, help="per-round delta")
@click.option("--rounds", type=int, required=True, help="number of composed rounds T")
@click.option("--delta-prime", type=float, default=1e-4, show_default=True,
              help="slack for the advanced composition bound")
@click.option("--allocation", type=click.Choice(ALLOCATIONS), default=None,
              help="also print a per-round schedule for a total budget of epsilon*rounds")
@click.option("--alpha", type=float, default=None, help="decay for adaptive allocation")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="write the table as CSV")
def accountant(epsilon, delta, rounds, delta_prime, allocation, alpha, csv_path):
    """Total privacy spend under basic and advanced composition."""
    try:
        params = DpParams(epsilon=epsilon, sensitivity=1.0, delta=delta)
        basic = compose_basic([params] * rounds)
        advanced = compose_advanced(epsilon, delta, rounds, delta_prime)
    except DdpsaError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"rounds                {rounds}")
    click.echo(f"per-round             eps={epsilon:.6g} delta={delta:.6g}")
    click.echo(f"basic composition     eps={basic[0]:.6g} delta={basic[1]:.6g}")
    click.echo(
        f"advanced composition  eps={advanced[0]:.6g} delta={advanced[1]:.6g} "
        f"(delta'={delta_prime:.6g})"
    )
    schedule = None
    if allocation is not None:
        try:
            plan = allocate_budget(epsilon * rounds, rounds, strategy=allocation, alpha=alpha)
        except DdpsaError as exc:
            raise click.ClickException(str(exc)) from exc
        schedule = plan.per_round
        head = ", ".join(f"{e:.6g}" for e in schedule[:8])
        tail = " ..." if rounds > 8 else ""
        click.echo(f"{allocation} schedule   [{head}{tail}] (total {sum(schedule):.6g})")
    if csv_path is not None:
        import csv as _csv

        path = Path(csv_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["quantity", "epsilon", "delta"])
            writer.writerow(["per_round", repr(epsilon), repr(delta)])
            writer.writerow(["basic_total", repr(basic[0]), repr(basic[1])])
            writer.writerow(["advanced_total", repr(advanced[0]), repr(advanced[1])])
            if schedule is not None:
                for t, e in enumerate(schedule, start=1):
                    writer.writerow([f"round_{t}", repr(e), repr(delta)])
        click.echo(f"wrote {path}")


@main.command("cost-model")
@click.option("-d", "--dimension", type=int, default=3, show_default=True)
@click.option("-m", "--servers", type=int, default=3, show_default=True)
@click.option("-n", "--clients", type=int, default=3, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="write the table as CSV")
def cost_model_cmd(dimension, servers, clients, csv_path):
    """Per-round byte counts: reference 4-byte convention vs actual wire format."""
    try:
        rows = cost_model(d=dimension, m=servers, n=clients)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(f"{'link':24} {'reference_bytes':>12} {'wire_bytes':>11}  note")
    for row in rows:
        note = "excluded from reference totals" if row.excluded else ""
        click.echo(f"{row.link:24} {row.reference_bytes:>12} {row.wire_bytes:>11}  {note}")
    ingress_shares = next(r for r in rows if r.link == "intermediates_to_ps")
    ingress_plain = next(r for r in rows if r.link == "plaintext_uplink")
    click.echo(
        f"ps ingress per round: {ingress_shares.reference_bytes} bytes via partial sums "
        f"vs {ingress_plain.reference_bytes} bytes via plaintext uploads (4-byte convention)"
    )
    if csv_path is not None:
        write_cost_csv(rows, csv_path)
        click.echo(f"wrote {csv_path}")


@main.command("gen-data")
@click.option("--samples", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default="dataset.csv", show_default=True)
def gen_data(samples, seed, out):
    """Write the synthetic regression dataset as CSV (x1, x2, y, split)."""
    try:
        ds = generate_dataset(samples, seed)
    except DdpsaError as exc:
        raise click.UsageError(str(exc)) from exc
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(ds, path)
    click.echo(
        f"wrote {path}: {ds.n_samples} rows "
        f"({ds.n_train} train, {ds.n_val} val, {ds.n_test} test), seed {seed}"
    )


if __name__ == "__main__":
    main()
