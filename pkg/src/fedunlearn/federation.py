"""Federated-learning loop on a simulated clock: client registry, local
updates, weighted FedAvg aggregation, and per-round checkpoint digests.

Clients run "in parallel" in simulated time (a round costs the slowest
participant plus one aggregation), but their updates are always folded in
ascending client_id so the arithmetic is bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .learning import Dataset, ModelParams, TrainConfig, train
from .ledger import CheckpointStore, params_digest


@dataclass
class CostModel:
    """Simulated-time unit costs for the phases the clock accounts."""

    time_per_local_epoch_per_sample: float = 0.0
    time_per_aggregation: float = 0.0
    time_per_consensus_message: float = 0.0
    time_per_proof: float = 0.0
    time_per_metric_eval: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "time_per_local_epoch_per_sample",
            "time_per_aggregation",
            "time_per_consensus_message",
            "time_per_proof",
            "time_per_metric_eval",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    holdout: Dataset | None = None
    is_target: bool = False
    is_remaining: bool = True

    def __post_init__(self) -> None:
        if self.is_target and self.is_remaining:
            raise ValueError("a client cannot be both target and remaining")

    @property
    def sample_count(self) -> int:
        return len(self.dataset)


def assign_roles(clients: Sequence[ClientState], target_ids: Sequence[int]) -> list[ClientState]:
    """Role view of the registry for one request context: targets vs remaining."""
    targets = set(target_ids)
    unknown = targets - {c.client_id for c in clients}
    if unknown:
        raise ValueError(f"unknown client ids {sorted(unknown)}")
    return [
        replace(c, is_target=c.client_id in targets, is_remaining=c.client_id not in targets)
        for c in clients
    ]


@dataclass
class FederationState:
    global_params: ModelParams
    clients: list[ClientState]
    round_index: int = 0
    clock: float = 0.0
    round_checkpoints: list[tuple[int, str]] = field(default_factory=list)

    def client(self, client_id: int) -> ClientState:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise ValueError(f"unknown client id {client_id}")


def local_update(
    client: ClientState, global_params: ModelParams, config: TrainConfig, cost_model: CostModel
) -> tuple[np.ndarray, float]:
    """One client's local training pass: (delta over the global coefficients, simulated cost)."""
    if client.sample_count == 0:
        raise ValueError(f"client {client.client_id} has an empty dataset")
    trained = train(global_params, client.dataset, config)
    delta = trained.coefficients - global_params.coefficients
    cost = config.epochs * client.sample_count * cost_model.time_per_local_epoch_per_sample
    return delta, cost


def fedavg(updates: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    """Weighted mean of update vectors, weights normalized to sum 1.

    Accumulation follows the given order; callers pass clients in ascending
    id so results are reproducible.
    """
    if len(updates) == 0:
        raise ValueError("fedavg needs at least one update")
    if len(updates) != len(weights):
        raise ValueError("updates and weights must have equal length")
    shape = updates[0].shape
    if any(u.shape != shape for u in updates):
        raise ValueError("update shape mismatch")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    total = float(w.sum())
    acc = np.zeros(shape, dtype=np.float64)
    for u, wi in zip(updates, w):
        acc += (wi / total) * u
    return acc


def aggregate_round(
    global_params: ModelParams,
    datasets: Sequence[Dataset],
    config: TrainConfig,
    cost_model: CostModel,
) -> tuple[ModelParams, list[float]]:
    """One FedAvg round over the given datasets (already in fold order).

    Shared by the live simulator and by retraining oracles, so an identical
    dataset list yields bit-identical global parameters in both.
    """
    updates: list[np.ndarray] = []
    costs: list[float] = []
    for ds in datasets:
        if len(ds) == 0:
            raise ValueError("cannot aggregate over an empty dataset")
        trained = train(global_params, ds, config)
        updates.append(trained.coefficients - global_params.coefficients)
        costs.append(config.epochs * len(ds) * cost_model.time_per_local_epoch_per_sample)
    agg = fedavg(updates, [len(ds) for ds in datasets])
    new_params = ModelParams(arch=global_params.arch, coefficients=global_params.coefficients + agg)
    return new_params, costs


def run_round(
    state: FederationState,
    participant_ids: Sequence[int],
    config: TrainConfig,
    cost_model: CostModel,
    store: CheckpointStore | None = None,
) -> FederationState:
    """Advance the federation by one round with the given participants."""
    if len(participant_ids) == 0:
        raise ValueError("a round needs at least one participant")
    known = {c.client_id for c in state.clients}
    unknown = set(participant_ids) - known
    if unknown:
        raise ValueError(f"unknown client ids {sorted(unknown)}")
    ordered = sorted(set(participant_ids))
    datasets = [state.client(cid).dataset for cid in ordered]
    new_params, costs = aggregate_round(state.global_params, datasets, config, cost_model)
    new_round = state.round_index + 1
    snapshot_digest = store.store(new_params) if store is not None else params_digest(new_params)
    return replace(
        state,
        global_params=new_params,
        round_index=new_round,
        clock=state.clock + max(costs) + cost_model.time_per_aggregation,
        round_checkpoints=state.round_checkpoints + [(new_round, snapshot_digest)],
    )


def train_federation(
    state: FederationState,
    rounds: int,
    config: TrainConfig,
    cost_model: CostModel,
    store: CheckpointStore | None = None,
) -> FederationState:
    """Run full-participation rounds, emitting one checkpoint per round."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    all_ids = [c.client_id for c in state.clients]
    for _ in range(rounds):
        state = run_round(state, all_ids, config, cost_model, store=store)
    return state
