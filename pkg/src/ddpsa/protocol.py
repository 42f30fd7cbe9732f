"""Round state machines for the three roles and four training mechanisms.

A round is one pass of the workflow: the parameter server broadcasts the
model, each client computes its gradient over its shard and uploads it
(plaintext, or noised and secret-shared, depending on the mechanism),
intermediate servers fold one share per client into a partial sum, and the
parameter server reconstructs only the aggregate and steps the optimizer.

Mechanism table:
    no_private  SGD 0.1   plaintext upload, no clipping, no noise
    ldp         Adam 1e-3 clip + Laplace noise, plaintext upload
    mpc         SGD 0.1   fixed-point encode + secret shares, no noise
    ddp_sa      Adam 1e-3 clip + noise, then encode + secret shares

The private mechanisms calibrate the clip bound from a short warmup on a
throwaway model: the median per-sample L1 gradient norm observed over the
warmup rounds. The warmup is deterministic given the data, so paired runs
(ldp vs ddp_sa at one seed) see the same sensitivity and, because they
draw from identically seeded noise generators, the same noise. The two
runs then differ only by fixed-point quantization, which is the basis of
the cross-mechanism oracle tests.
"""
from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .config import ExperimentConfig
from .errors import (
    ConfigurationError,
    IncompleteRoundError,
    ProtocolError,
    ReceiveTimeoutError,
    RoundDesyncError,
    WraparoundError,
)
from .field import DEFAULT_MODULUS, FixedPointCodec
from .learning import (
    MODEL_DIMENSION,
    AdamState,
    ModelParams,
    SgdState,
    Shard,
    apply_update,
    evaluate,
    generate_dataset,
    partition_iid,
    per_sample_gradients,
)
from .messages import ModelBroadcast, PartialSum, PlainGradientUpload, RoundMessage, ShareUpload
from .privacy import (
    DpParams,
    PrivacyLedger,
    allocate_budget,
    calibrate_sensitivity,
    perturb_gradient,
)
from .sharing import AGGREGATE_CLIENT_ID, ShareVector, aggregate_shares, reconstruct, split
from .transport import (
    PS_ENDPOINT,
    Endpoint,
    SimTransport,
    TcpTransport,
    client_endpoint,
    server_endpoint,
)

log = logging.getLogger("ddpsa.protocol")

DEFAULT_DELTA_PRIME = 1e-4


class Mechanism(str, Enum):
    NO_PRIVATE = "no_private"
    LDP = "ldp"
    MPC = "mpc"
    DDP_SA = "ddp_sa"

    @property
    def uses_dp(self) -> bool:
        return self in (Mechanism.LDP, Mechanism.DDP_SA)

    @property
    def uses_shares(self) -> bool:
        return self in (Mechanism.MPC, Mechanism.DDP_SA)

    def make_optimizer(self):
        return AdamState() if self.uses_dp else SgdState()


def calibrate_from_warmup(
    shards: Sequence[Shard], mechanism: Mechanism, warmup_rounds: int
) -> float:
    """Clip bound from a throwaway warmup: median per-sample L1 norm.

    Trains a scratch model with the mechanism's own optimizer on plain
    (unclipped, unnoised) aggregates for warmup_rounds, recording every
    per-sample gradient L1 norm seen along the way. No randomness, so the
    result depends only on the data and the optimizer family.
    """
    params = ModelParams.zeros()
    opt_state = mechanism.make_optimizer()
    norms = []
    for _ in range(warmup_rounds):
        client_means = []
        for shard in shards:
            grads = per_sample_gradients(params, shard.features, shard.labels)
            norms.append(np.abs(grads).sum(axis=1))
            client_means.append(grads.mean(axis=0))
        direction = np.mean(client_means, axis=0)
        params, opt_state = apply_update(params, opt_state, direction)
    return calibrate_sensitivity(np.concatenate(norms))


# ------------------------------------------------------------------ client

@dataclass
class ClientState:
    client_id: int
    shard: Shard
    m_servers: int
    codec: Optional[FixedPointCodec]
    dp: Optional[DpParams]
    noise_rng: Optional[np.random.Generator]
    share_rng: Optional[random.Random]
    expected_round: int = 0
    last_release: Optional[np.ndarray] = None  # diagnostic: values most recently uploaded


def client_round(
    state: ClientState, broadcast: ModelBroadcast, mech: Mechanism
) -> list[RoundMessage]:
    """One client step: gradients over the shard, then the mechanism's upload."""
    if broadcast.round_id != state.expected_round:
        raise RoundDesyncError(
            f"client {state.client_id} expected round {state.expected_round}, "
            f"got broadcast for round {broadcast.round_id}"
        )
    params = ModelParams.from_array(broadcast.theta)
    grads = per_sample_gradients(params, state.shard.features, state.shard.labels)
    if mech.uses_dp:
        if state.dp is None or state.noise_rng is None:
            raise ProtocolError(f"client {state.client_id} has no DP parameters")
        release = perturb_gradient(grads, state.dp, state.noise_rng)
    else:
        release = grads.mean(axis=0)
    state.last_release = release
    state.expected_round += 1
    if mech.uses_shares:
        if state.codec is None or state.share_rng is None:
            raise ProtocolError(f"client {state.client_id} has no codec or share rng")
        encoded = [state.codec.encode(float(v)) for v in release]
        share_set = split(
            encoded,
            state.m_servers,
            state.share_rng,
            round_id=broadcast.round_id,
            client_id=state.client_id,
        )
        return [ShareUpload(share=sv) for sv in share_set.shares]
    return [
        PlainGradientUpload(
            round_id=broadcast.round_id,
            client_id=state.client_id,
            gradient=tuple(float(v) for v in release),
        )
    ]


# ------------------------------------------------- intermediate server

@dataclass
class IntermediateServerState:
    server_index: int
    n_clients: int
    current_round: int = 0


def server_round(
    state: IntermediateServerState, uploads: Sequence[ShareUpload]
) -> PartialSum:
    """Fold one share per client into this server's partial sum."""
    shares = []
    for up in uploads:
        if not isinstance(up, ShareUpload):
            raise ProtocolError(
                f"server {state.server_index} received a {type(up).__name__}, "
                "only share uploads belong here"
            )
        sv = up.share
        if sv.server_index != state.server_index:
            raise ProtocolError(
                f"share for server {sv.server_index} delivered to server {state.server_index}"
            )
        if sv.round_id != state.current_round:
            raise RoundDesyncError(
                f"server {state.server_index} is in round {state.current_round}, "
                f"share is for round {sv.round_id}"
            )
        shares.append(sv)
    ids = [sv.client_id for sv in shares]
    if len(set(ids)) != len(ids):
        raise ProtocolError(
            f"server {state.server_index} received duplicate client uploads: {sorted(ids)}"
        )
    if len(shares) != state.n_clients:
        raise IncompleteRoundError(
            f"server {state.server_index} has {len(shares)} of {state.n_clients} "
            f"share uploads for round {state.current_round}"
        )
    shares.sort(key=lambda sv: sv.client_id)
    partial = aggregate_shares(shares)
    state.current_round += 1
    return PartialSum.from_share_vector(partial)


# ------------------------------------------------------ parameter server

@dataclass
class ParameterServerState:
    params: ModelParams
    opt_state: object
    n_clients: int
    m_servers: int
    codec: Optional[FixedPointCodec]
    value_bound: float
    ledger: PrivacyLedger = dc_field(default_factory=PrivacyLedger)
    round_id: int = 0


def _reconstruct_aggregate(
    state: ParameterServerState, inputs: Sequence[PartialSum]
) -> np.ndarray:
    for ps in inputs:
        if not isinstance(ps, PartialSum):
            raise ProtocolError(
                f"parameter server expected partial sums, got {type(ps).__name__}"
            )
        if ps.round_id != state.round_id:
            raise RoundDesyncError(
                f"parameter server is in round {state.round_id}, "
                f"partial sum is for round {ps.round_id}"
            )
    indices = [ps.server_index for ps in inputs]
    if len(set(indices)) != len(indices):
        raise ProtocolError(f"duplicate partial sums from servers {sorted(indices)}")
    if sorted(indices) != list(range(state.m_servers)):
        raise IncompleteRoundError(
            f"round {state.round_id} has partial sums from servers {sorted(indices)}, "
            f"need all of 0..{state.m_servers - 1}"
        )
    vecs = [
        ShareVector(
            round_id=ps.round_id,
            client_id=AGGREGATE_CLIENT_ID,
            server_index=ps.server_index,
            elements=ps.elements,
        )
        for ps in inputs
    ]
    secret = reconstruct(vecs, m=state.m_servers)
    assert state.codec is not None
    decoded = np.array([state.codec.decode(e) for e in secret])
    bound = state.n_clients * state.value_bound
    if np.any(np.abs(decoded) > bound):
        raise WraparoundError(
            f"decoded aggregate {decoded} exceeds {bound}; "
            "the modulus has insufficient headroom for this configuration"
        )
    return decoded


def _sum_plain(
    state: ParameterServerState, inputs: Sequence[PlainGradientUpload]
) -> np.ndarray:
    for up in inputs:
        if not isinstance(up, PlainGradientUpload):
            raise ProtocolError(
                f"parameter server expected plain gradients, got {type(up).__name__}"
            )
        if up.round_id != state.round_id:
            raise RoundDesyncError(
                f"parameter server is in round {state.round_id}, "
                f"upload is for round {up.round_id}"
            )
        if len(up.gradient) != MODEL_DIMENSION:
            raise ProtocolError(
                f"gradient of dimension {len(up.gradient)}, expected {MODEL_DIMENSION}"
            )
    ids = [up.client_id for up in inputs]
    if len(set(ids)) != len(ids):
        raise ProtocolError(f"duplicate uploads from clients {sorted(ids)}")
    if len(inputs) != state.n_clients:
        raise IncompleteRoundError(
            f"round {state.round_id} has {len(inputs)} of {state.n_clients} uploads"
        )
    ordered = sorted(inputs, key=lambda up: up.client_id)
    return np.array([up.gradient for up in ordered]).sum(axis=0)


def ps_round(
    state: ParameterServerState,
    inputs: Sequence[RoundMessage],
    mech: Mechanism,
    dp: Optional[DpParams] = None,
) -> tuple[ModelBroadcast, np.ndarray]:
    """Reconstruct (or sum) the aggregate, step the model, emit the next broadcast.

    Returns the broadcast for the next round and the aggregate gradient sum
    (before 1/n scaling), which the harness records for the oracle tests.
    """
    if mech.uses_shares:
        agg_sum = _reconstruct_aggregate(state, inputs)
    else:
        agg_sum = _sum_plain(state, inputs)
    direction = agg_sum / state.n_clients
    state.params, state.opt_state = apply_update(state.params, state.opt_state, direction)
    if mech.uses_dp:
        if dp is None:
            raise ProtocolError("private mechanism stepped without DP parameters")
        state.ledger.append(dp)
    state.round_id += 1
    return ModelBroadcast(round_id=state.round_id, theta=state.params.theta), agg_sum


# ---------------------------------------------------------- full training

@dataclass(frozen=True)
class MetricsRow:
    round: int
    train_loss: float
    val_loss: float
    test_loss: float
    test_r2: float
    uplink_values_per_client: int
    wall_ms: float


@dataclass
class TrainingReport:
    mechanism: str
    config: ExperimentConfig
    rows: list[MetricsRow]
    rounds_total: int
    converged: bool
    rounds_to_convergence: Optional[int]
    final_theta: tuple[float, float, float]
    final_train_loss: float
    final_val_loss: float
    final_test_loss: float
    final_test_r2: float
    sensitivity: Optional[float]
    privacy_spent_basic: Optional[tuple[float, float]]
    privacy_spent_advanced: Optional[tuple[float, float]]
    delta_prime: Optional[float]
    uplink_values_per_client: int
    wall_seconds: float
    aggregates: Optional[list[np.ndarray]] = None


def _receive(transport, endpoint: Endpoint, context: str):
    try:
        return transport.receive(endpoint)
    except ReceiveTimeoutError as exc:
        raise IncompleteRoundError(f"{context}: {exc}") from exc


def run_training(
    config: ExperimentConfig,
    transport=None,
    collect_aggregates: bool = False,
) -> TrainingReport:
    """Drive the full workflow for one configuration.

    Passing a transport (e.g. a SimTransport with taps or drop rules
    installed) lets tests observe or disturb the traffic; by default the
    run builds its own from config.transport and closes it afterwards.
    """
    mech = Mechanism(config.mechanism)
    n = config.n_clients
    m = config.m_servers

    dataset = generate_dataset(config.n_samples, config.seed)
    shards = partition_iid(dataset, n)
    sizes = {s.n_samples for s in shards}
    if len(sizes) != 1:
        raise ConfigurationError(
            f"equal shards required for the 1/n aggregate scaling, got sizes {sorted(sizes)}"
        )

    codec = FixedPointCodec(DEFAULT_MODULUS, config.d_n) if mech.uses_shares else None
    if codec is not None:
        codec.validate_headroom(n, config.value_bound)

    if mech.uses_dp:
        sensitivity = calibrate_from_warmup(shards, mech, config.warmup_rounds)
        plan = allocate_budget(
            config.epsilon * config.T_max,
            config.T_max,
            strategy=config.allocation,
            alpha=config.alpha,
        )
        schedule = plan.per_round
        log.info("calibrated sensitivity %.6f over %d warmup rounds", sensitivity, config.warmup_rounds)
    else:
        sensitivity = None
        schedule = None

    clients = [
        ClientState(
            client_id=i,
            shard=shards[i],
            m_servers=m,
            codec=codec,
            dp=None,
            noise_rng=np.random.default_rng([config.seed, 1000 + i]) if mech.uses_dp else None,
            share_rng=random.Random(f"share:{config.seed}:{i}") if mech.uses_shares else None,
        )
        for i in range(n)
    ]
    servers = [IntermediateServerState(j, n) for j in range(m)] if mech.uses_shares else []
    ps_state = ParameterServerState(
        params=ModelParams.zeros(),
        opt_state=mech.make_optimizer(),
        n_clients=n,
        m_servers=m,
        codec=codec,
        value_bound=config.value_bound,
    )

    endpoints = [PS_ENDPOINT] + [client_endpoint(i) for i in range(n)]
    if mech.uses_shares:
        endpoints += [server_endpoint(j) for j in range(m)]
    own_transport = transport is None
    if own_transport:
        transport = SimTransport() if config.transport == "sim" else TcpTransport(endpoints)

    uplink = MODEL_DIMENSION * (m if mech.uses_shares else 1)
    rows: list[MetricsRow] = []
    aggregates: Optional[list[np.ndarray]] = [] if collect_aggregates else None
    best_val = np.inf
    streak = 0
    converged = False
    stop_round = config.T_max
    broadcast = ModelBroadcast(round_id=0, theta=ps_state.params.theta)
    started = time.perf_counter()
    try:
        for t in range(1, config.T_max + 1):
            round_started = time.perf_counter()
            dp_t = (
                DpParams(schedule[t - 1], sensitivity, config.delta)
                if mech.uses_dp
                else None
            )
            for client in clients:
                client.dp = dp_t
            for i in range(n):
                transport.send(PS_ENDPOINT, client_endpoint(i), broadcast)
            for i, client in enumerate(clients):
                msg = _receive(
                    transport,
                    client_endpoint(i),
                    f"client {i} waiting for the round-{t} model broadcast",
                )
                if not isinstance(msg, ModelBroadcast):
                    raise ProtocolError(f"client {i} received a {type(msg).__name__}")
                for out in client_round(client, msg, mech):
                    if isinstance(out, ShareUpload):
                        dst = server_endpoint(out.share.server_index)
                    else:
                        dst = PS_ENDPOINT
                    transport.send(client_endpoint(i), dst, out)
            if mech.uses_shares:
                for j, server in enumerate(servers):
                    uploads = []
                    for k in range(n):
                        uploads.append(
                            _receive(
                                transport,
                                server_endpoint(j),
                                f"server {j} has {k} of {n} share uploads for round {t}",
                            )
                        )
                    partial = server_round(server, uploads)
                    transport.send(server_endpoint(j), PS_ENDPOINT, partial)
                expected = m
            else:
                expected = n
            inputs = []
            for k in range(expected):
                inputs.append(
                    _receive(
                        transport,
                        PS_ENDPOINT,
                        f"parameter server has {k} of {expected} inputs for round {t}",
                    )
                )
            broadcast, agg_sum = ps_round(ps_state, inputs, mech, dp_t)
            if aggregates is not None:
                aggregates.append(agg_sum)

            train_m = evaluate(ps_state.params, *dataset.train())
            val_m = evaluate(ps_state.params, *dataset.val())
            test_m = evaluate(ps_state.params, *dataset.test())
            rows.append(
                MetricsRow(
                    round=t,
                    train_loss=train_m.loss,
                    val_loss=val_m.loss,
                    test_loss=test_m.loss,
                    test_r2=test_m.r2,
                    uplink_values_per_client=uplink,
                    wall_ms=(time.perf_counter() - round_started) * 1000.0,
                )
            )
            if val_m.loss < best_val * (1.0 - config.convergence.rel_tol):
                best_val = val_m.loss
                streak = 0
            else:
                streak += 1
                if streak >= config.convergence.patience:
                    converged = True
                    stop_round = t
                    break
    finally:
        if own_transport:
            transport.close()
    wall = time.perf_counter() - started

    if mech.uses_dp and ps_state.ledger.rounds > 0:
        basic = ps_state.ledger.totals_basic()
        advanced = ps_state.ledger.totals_advanced(DEFAULT_DELTA_PRIME)
        delta_prime = DEFAULT_DELTA_PRIME
    else:
        basic = None
        advanced = None
        delta_prime = None

    last = rows[-1]
    return TrainingReport(
        mechanism=mech.value,
        config=config,
        rows=rows,
        rounds_total=stop_round,
        converged=converged,
        rounds_to_convergence=(
            stop_round - config.convergence.patience + 1 if converged else None
        ),
        final_theta=ps_state.params.theta,
        final_train_loss=last.train_loss,
        final_val_loss=last.val_loss,
        final_test_loss=last.test_loss,
        final_test_r2=last.test_r2,
        sensitivity=sensitivity,
        privacy_spent_basic=basic,
        privacy_spent_advanced=advanced,
        delta_prime=delta_prime,
        uplink_values_per_client=uplink,
        wall_seconds=wall,
        aggregates=aggregates,
    )
