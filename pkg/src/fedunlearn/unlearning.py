"""Unlearning lifecycle engine: simulated consensus, exact retraining,
gradient-ascent unlearning with recovery fine-tuning, and revocation/restore.

The two algorithm callables in ALGORITHM_REGISTRY are the single source of
truth for the model math: the engine operations wrap them with cost
accounting and digests, and replay verification re-executes the very same
callables, so honest proofs are accepted by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .federation import CostModel, FederationState, aggregate_round
from .learning import Dataset, ModelParams, TrainConfig, init_params, loss_and_grad
from .ledger import CheckpointStore, params_digest
from .metrics import PhaseTimings

REQUEST_STATUSES = ("pending", "consensus_reached", "executed", "verified", "revoked", "restored")

_ALLOWED_TRANSITIONS = {
    "pending": ("consensus_reached",),
    "consensus_reached": ("executed",),
    "executed": ("verified", "revoked"),
    "verified": ("revoked",),
    "revoked": ("restored",),
    "restored": (),
}

MODES = ("exact_retrain", "gradient_ascent")

# Simulated-time mapping of the one-month regulatory response window.
DEFAULT_DEADLINE_DAYS = 30.0

_ZERO_COST = CostModel()


@dataclass
class UnlearningRequest:
    request_id: int
    target_client_ids: tuple[int, ...]
    submitted_at: float
    deadline: float
    mode: str
    status: str = "pending"

    def __post_init__(self) -> None:
        self.target_client_ids = tuple(int(c) for c in self.target_client_ids)
        if not self.target_client_ids:
            raise ValueError("target_client_ids must be non-empty")
        if self.deadline <= 0:
            raise ValueError("deadline must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown unlearning mode {self.mode!r}")
        if self.status not in REQUEST_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


def advance_status(request: UnlearningRequest, new_status: str) -> None:
    """Enforce the lifecycle state machine; illegal transitions are rejected."""
    if new_status not in REQUEST_STATUSES:
        raise ValueError(f"unknown status {new_status!r}")
    if new_status not in _ALLOWED_TRANSITIONS[request.status]:
        raise ValueError(f"illegal transition {request.status} -> {new_status}")
    request.status = new_status


@dataclass
class UnlearnConfig:
    """Everything an unlearning algorithm needs to be rerun exactly: the
    federated retraining schedule plus the gradient-ascent knobs."""

    retrain: TrainConfig
    rounds: int
    init_seed: int
    ascent_steps: int = 0
    ascent_lr: float = 0.01
    grad_clip_norm: float = 1.0
    recovery_rounds: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.ascent_steps < 0 or self.recovery_rounds < 0:
            raise ValueError("ascent_steps and recovery_rounds must be >= 0")
        if self.ascent_lr <= 0 or self.grad_clip_norm <= 0:
            raise ValueError("ascent_lr and grad_clip_norm must be > 0")

    def canonical_map(self) -> dict[str, str]:
        return {
            "rounds": str(self.rounds),
            "init_seed": str(self.init_seed),
            "epochs": str(self.retrain.epochs),
            "learning_rate": repr(float(self.retrain.learning_rate)),
            "batch_size": str(self.retrain.batch_size),
            "seed": str(self.retrain.seed),
            "ascent_steps": str(self.ascent_steps),
            "ascent_lr": repr(float(self.ascent_lr)),
            "grad_clip_norm": repr(float(self.grad_clip_norm)),
            "recovery_rounds": str(self.recovery_rounds),
        }


@dataclass
class UnlearnPlan:
    executor: str
    algorithm_id: str


@dataclass
class UnlearningOutcome:
    unlearned_params: ModelParams
    pre_unlearning_digest: str
    post_unlearning_digest: str
    timings: PhaseTimings
    algorithm_id: str
    seed: int


def consensus_phase(
    request: UnlearningRequest, state: FederationState, cost_model: CostModel
) -> tuple[UnlearnPlan, float]:
    """Server executes, algorithm follows the request mode; one broadcast plus
    one ack round across the registry."""
    if request.status != "pending":
        raise ValueError(f"consensus requires a pending request, got {request.status!r}")
    consensus_time = 2 * len(state.clients) * cost_model.time_per_consensus_message
    advance_status(request, "consensus_reached")
    return UnlearnPlan(executor="server", algorithm_id=request.mode), consensus_time


def _alg_exact_retrain(
    pre_params: ModelParams,
    target_data: Dataset,
    retained_data: Sequence[Dataset],
    config: UnlearnConfig,
) -> ModelParams:
    if len(retained_data) == 0:
        raise ValueError("cannot retrain on an empty retained set")
    params = init_params(pre_params.arch, config.init_seed)
    for _ in range(config.rounds):
        params, _ = aggregate_round(params, retained_data, config.retrain, _ZERO_COST)
    return params


def _alg_gradient_ascent(
    pre_params: ModelParams,
    target_data: Dataset,
    retained_data: Sequence[Dataset],
    config: UnlearnConfig,
) -> ModelParams:
    if len(target_data) == 0:
        raise ValueError("gradient ascent needs non-empty target data")
    coef = pre_params.coefficients.copy()
    for _ in range(config.ascent_steps):
        _, grad = loss_and_grad(ModelParams(pre_params.arch, coef), target_data)
        norm = float(np.linalg.norm(grad))
        if norm > config.grad_clip_norm:
            grad = grad * (config.grad_clip_norm / norm)
        coef = coef + config.ascent_lr * grad
    params = ModelParams(arch=pre_params.arch, coefficients=coef)
    for _ in range(config.recovery_rounds):
        params, _ = aggregate_round(params, retained_data, config.retrain, _ZERO_COST)
    return params


ALGORITHM_REGISTRY = {
    "exact_retrain": _alg_exact_retrain,
    "gradient_ascent": _alg_gradient_ascent,
}


def _round_cost(datasets: Sequence[Dataset], config: TrainConfig, cost_model: CostModel) -> float:
    # Clients run in parallel: one round costs the slowest local pass plus aggregation.
    slowest = max(config.epochs * len(ds) * cost_model.time_per_local_epoch_per_sample for ds in datasets)
    return slowest + cost_model.time_per_aggregation


def retrain_from_scratch(
    retained_data: Sequence[Dataset],
    arch: Sequence[int],
    config: UnlearnConfig,
    cost_model: CostModel,
    pre_params: ModelParams,
) -> UnlearningOutcome:
    """Re-initialize from the configured seed and re-run the federated
    training schedule on the retained datasets only."""
    if len(retained_data) == 0:
        raise ValueError("cannot retrain on an empty retained set")
    if tuple(arch) != pre_params.arch:
        raise ValueError("arch does not match pre-unlearning parameters")
    empty_target = Dataset(
        features=np.zeros((0, retained_data[0].feature_dim)),
        labels=np.zeros(0, dtype=np.int64),
        sample_ids=np.zeros(0, dtype=np.int64),
        num_classes=retained_data[0].num_classes,
    )
    params = _alg_exact_retrain(pre_params, empty_target, retained_data, config)
    execution = config.rounds * _round_cost(retained_data, config.retrain, cost_model)
    return UnlearningOutcome(
        unlearned_params=params,
        pre_unlearning_digest=params_digest(pre_params),
        post_unlearning_digest=params_digest(params),
        timings=PhaseTimings(execution=execution),
        algorithm_id="exact_retrain",
        seed=config.retrain.seed,
    )


def gradient_ascent_unlearn(
    global_params: ModelParams,
    target_data: Dataset,
    retained_data: Sequence[Dataset],
    config: UnlearnConfig,
    cost_model: CostModel,
) -> UnlearningOutcome:
    """Clipped gradient-ascent steps on the target-data loss, then recovery
    FedAvg rounds on the retained clients."""
    if len(target_data) == 0:
        raise ValueError("gradient ascent needs non-empty target data")
    if config.recovery_rounds > 0 and len(retained_data) == 0:
        raise ValueError("recovery rounds need a non-empty retained set")
    params = _alg_gradient_ascent(global_params, target_data, retained_data, config)
    execution = (
        config.ascent_steps * len(target_data) * cost_model.time_per_local_epoch_per_sample
    )
    if config.recovery_rounds > 0:
        execution += config.recovery_rounds * _round_cost(retained_data, config.retrain, cost_model)
    return UnlearningOutcome(
        unlearned_params=params,
        pre_unlearning_digest=params_digest(global_params),
        post_unlearning_digest=params_digest(params),
        timings=PhaseTimings(execution=execution),
        algorithm_id="gradient_ascent",
        seed=config.retrain.seed,
    )


def revoke_and_restore(
    request: UnlearningRequest,
    checkpoint_store: CheckpointStore,
    pre_unlearning_digest: str,
    cost_model: CostModel,
) -> tuple[ModelParams, float]:
    """Revoke an executed/verified request and restore the checkpointed
    pre-unlearning model; loading is one aggregation-equivalent time unit.

    A missing checkpoint propagates as CheckpointMissingError: the caller
    records it as a reversibility failure rather than crashing the run.
    """
    if request.status not in ("executed", "verified"):
        raise ValueError(f"cannot revoke a request in status {request.status!r}")
    advance_status(request, "revoked")
    restored = checkpoint_store.load(pre_unlearning_digest)
    advance_status(request, "restored")
    return restored, cost_model.time_per_aggregation
