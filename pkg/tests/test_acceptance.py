"""Acceptance suite: one test per shipped claim, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. Full-scale training runs are cached and shared
across criteria, so the suite costs far less than the sum of its budgets.

Statistical checks (chi-square, noise averaging) use pinned seeds so a
pass is reproducible; the underlying properties hold for any seed at the
stated significance.
"""
from __future__ import annotations

import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from ddpsa.config import ExperimentConfig
from ddpsa.field import DEFAULT_MODULUS, FixedPointCodec, uniform_element
from ddpsa.learning import ModelParams, generate_dataset, partition_iid, per_sample_gradients
from ddpsa.privacy import DpParams, compose_advanced, compose_basic, laplace_noise, perturb_gradient
from ddpsa.protocol import Mechanism, calibrate_from_warmup, run_training
from ddpsa.sharing import reconstruct, split
from ddpsa.errors import IncompleteRoundError
from ddpsa.messages import PlainGradientUpload, ShareUpload
from ddpsa.transport import PS_ENDPOINT, SimTransport, client_endpoint, server_endpoint

# ----------------------------------------------------------------- helpers

_RUNS: dict = {}


def full_run(mechanism: str, seed: int):
    """Full-scale training run, cached across criteria."""
    key = (mechanism, seed)
    if key not in _RUNS:
        cfg = ExperimentConfig(mechanism=mechanism, seed=seed)
        _RUNS[key] = run_training(cfg, collect_aggregates=True)
    return _RUNS[key]


def check(num: int, name: str, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(
        f"criterion {num:02d} {status} {name}: {detail} [{elapsed:.1f}s of {budget:.0f}s budget]",
        flush=True,
    )
    assert ok, f"criterion {num}: {detail}"
    assert elapsed < budget, f"criterion {num} over budget: {elapsed:.1f}s >= {budget}s"


# ---------------------------------------------------------------- criteria


def test_criterion_01_accountant_exactness():
    started = time.perf_counter()
    basic = compose_basic([DpParams(0.1, 1.0, 0.0)] * 1000)
    advanced = compose_advanced(0.1, 0.0, 1000, 1e-4)
    ok = basic == (100.0, 0.0) and 24.08 <= advanced[0] <= 24.10
    check(
        1, "accountant exactness", ok,
        f"basic {basic[0]!r}, advanced {advanced[0]!r}",
        time.perf_counter() - started, 1.0,
    )


def test_criterion_02_share_roundtrip():
    started = time.perf_counter()
    rng = random.Random("acceptance:roundtrip")
    per_combo = 667  # 15 combos * 667 = 10005 vectors
    checked = 0
    exact = True
    for m in (1, 2, 3, 5, 8):
        for d in (1, 3, 64):
            for _ in range(per_combo):
                values = tuple(uniform_element(DEFAULT_MODULUS, rng) for _ in range(d))
                shares = split(values, m, rng, round_id=checked, client_id=7)
                if reconstruct(shares, m=m) != values:
                    exact = False
                checked += 1
    check(
        2, "share roundtrip", exact and checked >= 10_000,
        f"{checked} random vectors reconstructed exactly, m in 1/2/3/5/8, d in 1/3/64",
        time.perf_counter() - started, 30.0,
    )


def _low_byte_counts(secret_value: float, n_splits: int, seed: str) -> np.ndarray:
    """Low 8 bits of the server-0 share over repeated splits of one secret."""
    codec = FixedPointCodec(DEFAULT_MODULUS, 10)
    secret = (codec.encode(secret_value),)
    rng = random.Random(seed)
    counts = np.zeros(256, dtype=np.int64)
    for _ in range(n_splits):
        share = split(secret, 3, rng).shares[0]
        counts[share.elements[0].value & 0xFF] += 1
    return counts


def test_criterion_03_single_share_indistinguishability():
    started = time.perf_counter()
    n = 100_000
    counts_a = _low_byte_counts(0.75, n, "acceptance:share-dist:a")
    counts_b = _low_byte_counts(-2.5, n, "acceptance:share-dist:b")
    _, p_two_sample, _, _ = stats.chi2_contingency(np.stack([counts_a, counts_b]))
    p_uniform_a = stats.chisquare(counts_a).pvalue
    p_uniform_b = stats.chisquare(counts_b).pvalue
    ok = min(p_two_sample, p_uniform_a, p_uniform_b) > 0.01
    check(
        3, "single-share indistinguishability", ok,
        f"chi-square p: two-sample {p_two_sample:.3f}, "
        f"vs uniform {p_uniform_a:.3f}/{p_uniform_b:.3f}, all > 0.01",
        time.perf_counter() - started, 60.0,
    )


def test_criterion_04_quantization_bound():
    started = time.perf_counter()
    rng = np.random.default_rng(20240404)
    violations = 0
    worst = Fraction(0)
    for d_n in (2, 6, 10):
        codec = FixedPointCodec(DEFAULT_MODULUS, d_n)
        scale = codec.scale
        bound = Fraction(1, 2 * scale)
        xs = np.concatenate([
            rng.uniform(-1.0, 1.0, 60_000),
            rng.uniform(-1e4, 1e4, 40_000),
        ])
        for x in xs.tolist():
            q = codec.centered_lift(codec.encode(x))
            err = abs(Fraction(q, scale) - Fraction(x))
            if err > bound:
                violations += 1
            worst = max(worst, err * 2 * scale)  # as a fraction of the bound
    check(
        4, "quantization bound", violations == 0,
        f"0 violations over 300000 draws, worst error {float(worst):.6f} of the 1/(2*10^d_n) bound",
        time.perf_counter() - started, 60.0,
    )


def test_criterion_05_mpc_matches_no_private():
    started = time.perf_counter()
    plain = full_run("no_private", 0)
    shared = full_run("mpc", 0)
    n, sf = 3, 10**10
    bound = n / (2 * sf)
    rounds = min(len(plain.aggregates), len(shared.aggregates))
    max_diff = max(
        float(np.max(np.abs(plain.aggregates[t] - shared.aggregates[t])))
        for t in range(rounds)
    )
    r2_diff = abs(plain.final_test_r2 - shared.final_test_r2)
    ok = max_diff <= bound and r2_diff <= 1e-6
    check(
        5, "shared aggregation is lossless", ok,
        f"max per-round aggregate diff {max_diff:.3e} <= {bound:.1e} "
        f"over {rounds} rounds, final R^2 diff {r2_diff:.1e}",
        time.perf_counter() - started, 120.0,
    )


def test_criterion_06_ddp_sa_matches_ldp():
    started = time.perf_counter()
    ldp = full_run("ldp", 0)
    ddp = full_run("ddp_sa", 0)
    n, sf = 3, 10**10
    bound = n / (2 * sf)
    rounds = min(len(ldp.aggregates), len(ddp.aggregates))
    max_diff = max(
        float(np.max(np.abs(ldp.aggregates[t] - ddp.aggregates[t])))
        for t in range(rounds)
    )
    same_rtc = ldp.rounds_to_convergence == ddp.rounds_to_convergence
    ok = max_diff <= bound and same_rtc
    check(
        6, "shared noisy aggregation matches local DP", ok,
        f"max aggregate diff {max_diff:.3e} <= {bound:.1e}, rounds-to-convergence "
        f"{ldp.rounds_to_convergence} == {ddp.rounds_to_convergence}",
        time.perf_counter() - started, 180.0,
    )


def test_criterion_07_accuracy_reproduction():
    started = time.perf_counter()
    seeds = range(10)
    means = {}
    for mech in ("ddp_sa", "no_private", "mpc"):
        reports = [full_run(mech, s) for s in seeds]
        means[mech] = (
            float(np.mean([r.final_test_r2 for r in reports])),
            float(np.mean([r.final_test_loss for r in reports])),
        )
    ok = (
        means["ddp_sa"][0] >= 0.90
        and all(means[m][0] >= 0.9999 for m in ("no_private", "mpc"))
        and all(means[m][1] <= 1e-8 for m in ("no_private", "mpc"))
    )
    check(
        7, "desk-scale accuracy", ok,
        f"mean R^2 over 10 seeds: ddp_sa {means['ddp_sa'][0]:.4f} >= 0.90, "
        f"no_private {means['no_private'][0]:.6f}, mpc {means['mpc'][0]:.6f} >= 0.9999; "
        f"plain losses {means['no_private'][1]:.1e}/{means['mpc'][1]:.1e} <= 1e-8",
        time.perf_counter() - started, 1200.0,
    )


def test_criterion_08_trend_reproduction():
    from ddpsa.harness import sweep_clients, sweep_epsilon

    started = time.perf_counter()
    base = ExperimentConfig()
    eps_values = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    eps_rows = sweep_epsilon(base, eps_values, ("ldp", "ddp_sa"), repeats=5)
    # adjacent client counts differ in mean loss by only ~5%, against a
    # per-seed std near 25%, so this axis needs a larger sample than the
    # epsilon axis for the mean trend to show; 25 seeds puts the standard
    # error well under the smallest gap
    cli_rows = sweep_clients(base, (2, 3, 4, 5, 6), ("ldp", "ddp_sa"), repeats=25)

    problems = []
    end_r2 = {}
    for mech in ("ldp", "ddp_sa"):
        r2s = [r.mean_test_r2 for r in eps_rows if r.mechanism == mech]
        if not all(b >= a for a, b in zip(r2s, r2s[1:])):
            problems.append(f"{mech} epsilon R^2 not non-decreasing: {r2s}")
        end_r2[mech] = r2s[-1]
        if r2s[-1] < 0.995:
            problems.append(f"{mech} R^2 at eps=0.6 is {r2s[-1]:.4f} < 0.995")
        losses = [r.mean_test_loss for r in cli_rows if r.mechanism == mech]
        if not all(b <= a for a, b in zip(losses, losses[1:])):
            problems.append(f"{mech} client-sweep loss not non-increasing: {losses}")
    check(
        8, "epsilon and client-count trends", not problems,
        "; ".join(problems) or (
            f"R^2 non-decreasing over eps 0.1..0.6 (0.6 gives ldp "
            f"{end_r2['ldp']:.4f}, ddp_sa {end_r2['ddp_sa']:.4f}); "
            f"mean loss non-increasing over 2..6 clients"
        ),
        time.perf_counter() - started, 2700.0,
    )


def test_criterion_09_upload_accounting():
    started = time.perf_counter()
    counts = {}
    for mech in ("no_private", "ldp", "mpc", "ddp_sa"):
        cfg = ExperimentConfig(
            mechanism=mech, samples_per_client=40, T_max=2, warmup_rounds=2
        )
        counts[mech] = run_training(cfg).uplink_values_per_client
    ok = (
        counts["no_private"] == 3 and counts["ldp"] == 3
        and counts["mpc"] == 9 and counts["ddp_sa"] == 9
    )
    check(
        9, "upload accounting", ok,
        f"uplink values per client per round: "
        f"no_private {counts['no_private']}, ldp {counts['ldp']} (= 3); "
        f"mpc {counts['mpc']}, ddp_sa {counts['ddp_sa']} (= 9) at d=3, m=3",
        time.perf_counter() - started, 60.0,
    )


def test_criterion_10_noise_averaging():
    started = time.perf_counter()
    rng = np.random.default_rng(20241010)
    b, trials = 1.7, 100_000
    worst_rel = 0.0
    details = []
    for n in (2, 4, 8, 16):
        draws = laplace_noise(b, trials * n, rng).reshape(trials, n)
        observed = float(np.std(draws.mean(axis=1)))
        expected = b * math.sqrt(2.0) / math.sqrt(n)
        rel = abs(observed - expected) / expected
        worst_rel = max(worst_rel, rel)
        details.append(f"n={n}: {observed:.4f} vs {expected:.4f}")
    check(
        10, "noise averaging", worst_rel < 0.10,
        f"std of mean tracks b*sqrt(2)/sqrt(n) within {worst_rel:.1%} "
        f"({'; '.join(details)})",
        time.perf_counter() - started, 60.0,
    )


def test_criterion_11_full_threshold_faults():
    started = time.perf_counter()
    cfg = ExperimentConfig(samples_per_client=40, T_max=3, warmup_rounds=2)

    transport = SimTransport()
    transport.drop_link(server_endpoint(2), PS_ENDPOINT)
    with pytest.raises(IncompleteRoundError, match="parameter server") as exc_ps:
        run_training(cfg, transport=transport)

    transport = SimTransport()
    transport.drop_link(client_endpoint(1), server_endpoint(0))
    with pytest.raises(IncompleteRoundError, match="server 0") as exc_srv:
        run_training(cfg, transport=transport)

    check(
        11, "full-threshold fault behavior", True,
        f"withheld partial sum -> '{exc_ps.value}'; "
        f"withheld share upload -> '{exc_srv.value}'",
        time.perf_counter() - started, 60.0,
    )


def _tapped_low_byte_counts(secret_value: float, n_sends: int, seed: str) -> np.ndarray:
    """Low 8 bits of shares seen by a tap on the client-0 -> server-0 link."""
    codec = FixedPointCodec(DEFAULT_MODULUS, 10)
    secret = (codec.encode(secret_value),)
    rng = random.Random(seed)
    transport = SimTransport()
    tap = transport.eavesdrop_tap(client_endpoint(0), server_endpoint(0))
    for t in range(n_sends):
        share0 = split(secret, 3, rng, round_id=t).shares[0]
        transport.send(client_endpoint(0), server_endpoint(0), ShareUpload(share=share0))
    counts = np.zeros(256, dtype=np.int64)
    for msg in tap.messages(DEFAULT_MODULUS):
        counts[msg.share.elements[0].value & 0xFF] += 1
    transport.close()
    return counts


def test_criterion_12_eavesdropper_harness():
    started = time.perf_counter()

    # strict subset of links: the tapped stream carries nothing about the secret
    n = 100_000
    counts_a = _tapped_low_byte_counts(0.75, n, "acceptance:eaves:a")
    counts_b = _tapped_low_byte_counts(-2.5, n, "acceptance:eaves:b")
    _, p_two_sample, _, _ = stats.chi2_contingency(np.stack([counts_a, counts_b]))
    p_uniform = min(stats.chisquare(counts_a).pvalue, stats.chisquare(counts_b).pvalue)
    subset_ok = min(p_two_sample, p_uniform) > 0.01

    # all m links: taps on every share of client 0 rebuild its noisy upload
    cfg = ExperimentConfig(samples_per_client=40, T_max=2, warmup_rounds=3)
    transport = SimTransport()
    taps = [
        transport.eavesdrop_tap(client_endpoint(0), server_endpoint(j))
        for j in range(3)
    ]
    run_training(cfg, transport=transport)
    tapped_round0 = [
        next(m.share for m in tap.messages(DEFAULT_MODULUS) if m.round_id == 0)
        for tap in taps
    ]
    recovered = reconstruct(tapped_round0, m=3)

    # the same release, recomputed outside the protocol stack
    dataset = generate_dataset(cfg.n_samples, cfg.seed)
    shard0 = partition_iid(dataset, cfg.n_clients)[0]
    delta = calibrate_from_warmup(
        partition_iid(dataset, cfg.n_clients), Mechanism.DDP_SA, cfg.warmup_rounds
    )
    grads = per_sample_gradients(ModelParams.zeros(), shard0.features, shard0.labels)
    release = perturb_gradient(
        grads,
        DpParams(cfg.epsilon, delta, 0.0),
        np.random.default_rng([cfg.seed, 1000]),
    )
    codec = FixedPointCodec(DEFAULT_MODULUS, cfg.d_n)
    expected = tuple(codec.encode(float(v)) for v in release)
    all_links_ok = recovered == expected

    # contrast: in LDP mode the tap reads the noisy gradient verbatim
    ldp_cfg = cfg.with_overrides(mechanism="ldp")
    transport = SimTransport()
    ldp_tap = transport.eavesdrop_tap(client_endpoint(0), PS_ENDPOINT)
    run_training(ldp_cfg, transport=transport)
    ldp_msg = next(
        m for m in ldp_tap.messages(DEFAULT_MODULUS)
        if isinstance(m, PlainGradientUpload) and m.round_id == 0
    )
    ldp_ok = ldp_msg.gradient == tuple(float(v) for v in release)

    check(
        12, "eavesdropper harness", subset_ok and all_links_ok and ldp_ok,
        f"tapped single-link stream uniform (worst p {min(p_two_sample, p_uniform):.3f} > 0.01); "
        f"all-m-links taps reconstruct the noisy encoding exactly; "
        f"ldp tap equals the noisy gradient verbatim",
        time.perf_counter() - started, 300.0,
    )
