"""Batch front door: parse a scenario config, run train -> request -> unlearn
-> verify end to end, and emit the ledger, checkpoints, per-request reports,
and a summary table.

The entire artifact chain is a pure function of the config file: every seed
is derived from the single master seed, timestamps are simulated, and all
output serialization is canonical. Fault-injection flags simulate a dishonest
provider so the verification layer can be shown to catch one.
"""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import ledger as audit
from . import metrics
from .federation import ClientState, CostModel, FederationState, assign_roles, local_update, train_federation
from .learning import Dataset, SyntheticSpec, TrainConfig, concat_datasets, init_params, split_dataset
from .probes import TriggerSpec, inject_backdoor, backdoor_success_rate, mia_loss_threshold
from .unlearning import (
    ALGORITHM_REGISTRY,
    DEFAULT_DEADLINE_DAYS,
    MODES,
    UnlearnConfig,
    UnlearningRequest,
    advance_status,
    consensus_phase,
    gradient_ascent_unlearn,
    retrain_from_scratch,
    revoke_and_restore,
)

LEDGER_FILENAME = "ledger.jsonl"
CHECKPOINT_DIRNAME = "checkpoints"
SUMMARY_CSV_FILENAME = "summary.csv"
RUN_SUMMARY_FILENAME = "run_summary.json"


class ConfigError(ValueError):
    """Carries every validation problem found, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass
class RequestSpec:
    request_id: int
    target_client_ids: tuple[int, ...]
    mode: str
    deadline_days: float = DEFAULT_DEADLINE_DAYS
    revoke_after_verification: bool = False


@dataclass
class FaultFlags:
    """Dishonest-provider knobs. Each flips exactly its targeted verdicts on
    an otherwise-honest run: skip_unlearning -> completeness + correctness,
    tamper_ledger -> correctness, drop_checkpoint -> correctness + reversibility."""

    skip_unlearning: bool = False
    tamper_ledger: bool = False
    drop_checkpoint: bool = False


@dataclass
class BackdoorSpec:
    client_id: int
    trigger: TriggerSpec


@dataclass
class ScenarioConfig:
    seed: int
    data: SyntheticSpec
    holdout_fraction: float
    hidden_dims: tuple[int, ...]
    epochs: int
    learning_rate: float
    batch_size: int
    rounds: int
    cost_model: CostModel
    ascent_steps: int
    ascent_lr: float
    grad_clip_norm: float
    recovery_rounds: int
    requests: tuple[RequestSpec, ...]
    backdoor: BackdoorSpec | None
    thresholds: metrics.Thresholds
    adherence_mode: str
    time_units_per_day: float
    faults: FaultFlags = field(default_factory=FaultFlags)

    @property
    def arch(self) -> tuple[int, ...]:
        return (self.data.feature_dim, *self.hidden_dims, self.data.num_classes)


def derive_seed(master: int, label: str) -> int:
    """Stable child seed from the single master seed; keeps every stream
    independent while the whole run stays a function of one integer."""
    h = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little") >> 1


# ---------------------------------------------------------------------------
# config parsing (strict schema; unknown keys rejected by name)


def _check_keys(raw: Mapping[str, Any], allowed: set[str], section: str, errors: list[str]) -> None:
    for key in raw:
        if key not in allowed:
            errors.append(f"{section}: unknown key {key!r}")


def _num(raw, key, section, errors, *, integer=False, minimum=None, exclusive_minimum=None, default=None):
    if key not in raw:
        if default is None:
            errors.append(f"{section}.{key}: required")
            return None
        return default
    v = raw[key]
    ok_type = isinstance(v, int) and not isinstance(v, bool) if integer else (
        isinstance(v, (int, float)) and not isinstance(v, bool)
    )
    if not ok_type:
        errors.append(f"{section}.{key}: expected {'an integer' if integer else 'a number'}")
        return None
    if minimum is not None and v < minimum:
        errors.append(f"{section}.{key}: must be >= {minimum}")
        return None
    if exclusive_minimum is not None and v <= exclusive_minimum:
        errors.append(f"{section}.{key}: must be > {exclusive_minimum}")
        return None
    return int(v) if integer else float(v)


def _bool(raw, key, section, errors, default=False):
    if key not in raw:
        return default
    v = raw[key]
    if not isinstance(v, bool):
        errors.append(f"{section}.{key}: expected a boolean")
        return default
    return v


def config_from_dict(raw: Mapping[str, Any]) -> ScenarioConfig:
    errors: list[str] = []
    if not isinstance(raw, Mapping):
        raise ConfigError(["top level: expected an object"])
    _check_keys(
        raw,
        {
            "seed", "data", "model", "train", "federation", "cost_model", "unlearn",
            "requests", "backdoor", "thresholds", "adherence_mode", "time_units_per_day", "faults",
        },
        "top level",
        errors,
    )

    seed = _num(raw, "seed", "top level", errors, integer=True, minimum=0)

    data_raw = raw.get("data")
    data_spec = None
    holdout_fraction = None
    if not isinstance(data_raw, Mapping):
        errors.append("data: required object")
    else:
        _check_keys(
            data_raw,
            {
                "num_clients", "num_classes", "samples_per_client", "feature_dim",
                "class_mean_separation", "noise_std", "heterogeneity_shift", "holdout_fraction",
            },
            "data",
            errors,
        )
        num_clients = _num(data_raw, "num_clients", "data", errors, integer=True, minimum=1)
        num_classes = _num(data_raw, "num_classes", "data", errors, integer=True, minimum=2)
        samples = _num(data_raw, "samples_per_client", "data", errors, integer=True, minimum=1)
        feature_dim = _num(data_raw, "feature_dim", "data", errors, integer=True, minimum=1, default=10)
        separation = _num(data_raw, "class_mean_separation", "data", errors, minimum=0.0, default=6.0)
        noise = _num(data_raw, "noise_std", "data", errors, exclusive_minimum=0.0, default=1.0)
        shift = _num(data_raw, "heterogeneity_shift", "data", errors, minimum=0.0, default=0.0)
        holdout_fraction = _num(data_raw, "holdout_fraction", "data", errors, exclusive_minimum=0.0, default=0.2)
        if holdout_fraction is not None and holdout_fraction >= 1.0:
            errors.append("data.holdout_fraction: must be < 1")
            holdout_fraction = None
        if None not in (num_clients, num_classes, samples, feature_dim, separation, noise, shift):
            if feature_dim < num_classes:
                errors.append("data.feature_dim: must be >= num_classes")
            else:
                data_spec = SyntheticSpec(
                    num_clients=num_clients,
                    num_classes=num_classes,
                    samples_per_client=samples,
                    feature_dim=feature_dim,
                    class_mean_separation=separation,
                    noise_std=noise,
                    heterogeneity_shift=shift,
                )

    model_raw = raw.get("model", {})
    hidden_dims: tuple[int, ...] = ()
    if not isinstance(model_raw, Mapping):
        errors.append("model: expected an object")
    else:
        _check_keys(model_raw, {"hidden_dims"}, "model", errors)
        dims = model_raw.get("hidden_dims", [])
        if not isinstance(dims, list) or any(
            not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims
        ):
            errors.append("model.hidden_dims: expected a list of positive integers")
        else:
            hidden_dims = tuple(dims)

    train_raw = raw.get("train")
    epochs = learning_rate = batch_size = None
    if not isinstance(train_raw, Mapping):
        errors.append("train: required object")
    else:
        _check_keys(train_raw, {"epochs", "learning_rate", "batch_size"}, "train", errors)
        epochs = _num(train_raw, "epochs", "train", errors, integer=True, minimum=1)
        learning_rate = _num(train_raw, "learning_rate", "train", errors, exclusive_minimum=0.0)
        batch_size = _num(train_raw, "batch_size", "train", errors, integer=True, minimum=1)

    fed_raw = raw.get("federation")
    rounds = None
    if not isinstance(fed_raw, Mapping):
        errors.append("federation: required object")
    else:
        _check_keys(fed_raw, {"rounds"}, "federation", errors)
        rounds = _num(fed_raw, "rounds", "federation", errors, integer=True, minimum=1)

    cost_raw = raw.get("cost_model", {})
    cost_model = None
    if not isinstance(cost_raw, Mapping):
        errors.append("cost_model: expected an object")
    else:
        cost_keys = {
            "time_per_local_epoch_per_sample", "time_per_aggregation",
            "time_per_consensus_message", "time_per_proof", "time_per_metric_eval",
        }
        _check_keys(cost_raw, cost_keys, "cost_model", errors)
        vals = {k: _num(cost_raw, k, "cost_model", errors, minimum=0.0, default=0.0) for k in cost_keys}
        if all(v is not None for v in vals.values()):
            cost_model = CostModel(**vals)

    unlearn_raw = raw.get("unlearn", {})
    ascent_steps = ascent_lr = grad_clip_norm = recovery_rounds = None
    if not isinstance(unlearn_raw, Mapping):
        errors.append("unlearn: expected an object")
    else:
        _check_keys(unlearn_raw, {"ascent_steps", "ascent_lr", "grad_clip_norm", "recovery_rounds"}, "unlearn", errors)
        ascent_steps = _num(unlearn_raw, "ascent_steps", "unlearn", errors, integer=True, minimum=0, default=0)
        ascent_lr = _num(unlearn_raw, "ascent_lr", "unlearn", errors, exclusive_minimum=0.0, default=0.01)
        grad_clip_norm = _num(unlearn_raw, "grad_clip_norm", "unlearn", errors, exclusive_minimum=0.0, default=1.0)
        recovery_rounds = _num(unlearn_raw, "recovery_rounds", "unlearn", errors, integer=True, minimum=0, default=0)

    requests_raw = raw.get("requests")
    requests: list[RequestSpec] = []
    if not isinstance(requests_raw, list) or not requests_raw:
        errors.append("requests: required non-empty list")
    else:
        seen_ids: set[int] = set()
        for i, req in enumerate(requests_raw):
            section = f"requests[{i}]"
            if not isinstance(req, Mapping):
                errors.append(f"{section}: expected an object")
                continue
            _check_keys(
                req,
                {"request_id", "target_client_ids", "mode", "deadline_days", "revoke_after_verification"},
                section,
                errors,
            )
            rid = _num(req, "request_id", section, errors, integer=True, minimum=0)
            targets = req.get("target_client_ids")
            mode = req.get("mode")
            deadline_days = _num(req, "deadline_days", section, errors, exclusive_minimum=0.0, default=DEFAULT_DEADLINE_DAYS)
            revoke = _bool(req, "revoke_after_verification", section, errors)
            if rid in seen_ids:
                errors.append(f"{section}.request_id: duplicate id {rid}")
            if rid is not None:
                seen_ids.add(rid)
            if not isinstance(targets, list) or not targets or any(
                not isinstance(t, int) or isinstance(t, bool) or t < 0 for t in targets
            ):
                errors.append(f"{section}.target_client_ids: expected a non-empty list of client ids")
                targets = None
            elif data_spec is not None:
                bad = [t for t in targets if t >= data_spec.num_clients]
                if bad:
                    errors.append(f"{section}.target_client_ids: unknown client ids {bad}")
                    targets = None
                elif len(targets) >= data_spec.num_clients:
                    errors.append(f"{section}.target_client_ids: at least one client must remain")
                    targets = None
            if mode not in MODES:
                errors.append(f"{section}.mode: expected one of {list(MODES)}")
                mode = None
            if None not in (rid, targets, mode, deadline_days):
                requests.append(
                    RequestSpec(
                        request_id=rid,
                        target_client_ids=tuple(targets),
                        mode=mode,
                        deadline_days=deadline_days,
                        revoke_after_verification=revoke,
                    )
                )

    backdoor_raw = raw.get("backdoor")
    backdoor = None
    if backdoor_raw is not None:
        if not isinstance(backdoor_raw, Mapping):
            errors.append("backdoor: expected an object or null")
        else:
            _check_keys(
                backdoor_raw,
                {"client_id", "trigger_indices", "trigger_values", "target_label", "poison_fraction"},
                "backdoor",
                errors,
            )
            cid = _num(backdoor_raw, "client_id", "backdoor", errors, integer=True, minimum=0)
            tl = _num(backdoor_raw, "target_label", "backdoor", errors, integer=True, minimum=0)
            pf = _num(backdoor_raw, "poison_fraction", "backdoor", errors, exclusive_minimum=0.0)
            idx = backdoor_raw.get("trigger_indices")
            vals = backdoor_raw.get("trigger_values")
            shape_ok = (
                isinstance(idx, list)
                and isinstance(vals, list)
                and idx
                and len(idx) == len(vals)
                and all(isinstance(i, int) and not isinstance(i, bool) and i >= 0 for i in idx)
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)
            )
            if not shape_ok:
                errors.append("backdoor.trigger_indices/trigger_values: expected equal-length non-empty lists")
            if pf is not None and pf > 1.0:
                errors.append("backdoor.poison_fraction: must be <= 1")
                pf = None
            if None not in (cid, tl, pf) and shape_ok and data_spec is not None:
                if cid >= data_spec.num_clients:
                    errors.append(f"backdoor.client_id: unknown client id {cid}")
                elif max(idx) >= data_spec.feature_dim:
                    errors.append("backdoor.trigger_indices: index out of feature range")
                elif tl >= data_spec.num_classes:
                    errors.append("backdoor.target_label: exceeds num_classes")
                else:
                    backdoor = BackdoorSpec(
                        client_id=cid,
                        trigger=TriggerSpec(
                            trigger_indices=tuple(idx),
                            trigger_values=tuple(float(v) for v in vals),
                            target_label=tl,
                            poison_fraction=pf,
                        ),
                    )

    thresholds = metrics.default_thresholds()
    thr_raw = raw.get("thresholds")
    if thr_raw is not None:
        if not isinstance(thr_raw, Mapping):
            errors.append("thresholds: expected an object")
        else:
            merged = dict(thresholds.bounds)
            for goal, goal_bounds in thr_raw.items():
                if goal not in metrics.GOALS:
                    errors.append(f"thresholds: unknown goal {goal!r}")
                    continue
                if not isinstance(goal_bounds, Mapping):
                    errors.append(f"thresholds.{goal}: expected an object")
                    continue
                clean: dict[str, float] = {}
                for name, bound in goal_bounds.items():
                    if not (isinstance(name, str) and (name.startswith("max_") or name.startswith("min_"))):
                        errors.append(f"thresholds.{goal}.{name}: must start with max_ or min_")
                    elif not isinstance(bound, (int, float)) or isinstance(bound, bool):
                        errors.append(f"thresholds.{goal}.{name}: expected a number")
                    else:
                        clean[name] = float(bound)
                merged[goal] = clean  # per-goal override replaces the default map
            if not errors:
                thresholds = metrics.Thresholds(bounds=merged)

    adherence_mode = raw.get("adherence_mode", "binary")
    if adherence_mode not in ("binary", "proportional"):
        errors.append("adherence_mode: expected 'binary' or 'proportional'")

    time_units_per_day = _num(raw, "time_units_per_day", "top level", errors, exclusive_minimum=0.0, default=100.0)

    faults = FaultFlags()
    faults_raw = raw.get("faults", {})
    if not isinstance(faults_raw, Mapping):
        errors.append("faults: expected an object")
    else:
        _check_keys(faults_raw, {"skip_unlearning", "tamper_ledger", "drop_checkpoint"}, "faults", errors)
        faults = FaultFlags(
            skip_unlearning=_bool(faults_raw, "skip_unlearning", "faults", errors),
            tamper_ledger=_bool(faults_raw, "tamper_ledger", "faults", errors),
            drop_checkpoint=_bool(faults_raw, "drop_checkpoint", "faults", errors),
        )

    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(
        seed=seed,
        data=data_spec,
        holdout_fraction=holdout_fraction,
        hidden_dims=hidden_dims,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
        rounds=rounds,
        cost_model=cost_model,
        ascent_steps=ascent_steps,
        ascent_lr=ascent_lr,
        grad_clip_norm=grad_clip_norm,
        recovery_rounds=recovery_rounds,
        requests=tuple(requests),
        backdoor=backdoor,
        thresholds=thresholds,
        adherence_mode=adherence_mode,
        time_units_per_day=time_units_per_day,
        faults=faults,
    )


def parse_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class RunSummary:
    reports: tuple[metrics.VerificationReport, ...]
    final_model_digest: str
    ledger_head: str
    simulated_elapsed: float
    request_window: float
    throughput: float
    wall_runtime_seconds: float
    ledger: audit.Ledger
    checkpoint_store: audit.CheckpointStore
    paths: dict[str, str] | None = None

    @property
    def all_pass(self) -> bool:
        return all(r.all_pass for r in self.reports)


def _round6(x: float) -> float:
    """Reports serialize every number with 6 significant digits."""
    return float(f"{float(x):.6g}")


def _tamper_ledger(ledger: audit.Ledger) -> None:
    # Corrupt one payload character of a mid-chain entry without rechaining:
    # the stored hashes no longer match the recomputed ones.
    i = len(ledger.entries) // 2
    entry = ledger.entries[i]
    key = sorted(entry.payload)[0]
    value = entry.payload[key]
    flipped = (value[:-1] + chr(ord(value[-1]) ^ 1)) if value else "x"
    tampered = dict(entry.payload)
    tampered[key] = flipped
    ledger.entries[i] = replace(entry, payload=tampered)


def _build_clients(config: ScenarioConfig) -> list[ClientState]:
    from .learning import make_synthetic

    full = make_synthetic(config.data, derive_seed(config.seed, "data"))
    clients = []
    for cid, ds in enumerate(full):
        train_part, holdout = split_dataset(ds, config.holdout_fraction, derive_seed(config.seed, f"split:{cid}"))
        if config.backdoor is not None and cid == config.backdoor.client_id:
            train_part = inject_backdoor(train_part, config.backdoor.trigger, derive_seed(config.seed, "poison"))
        clients.append(ClientState(client_id=cid, dataset=train_part, holdout=holdout))
    return clients


def _unlearn_config(config: ScenarioConfig) -> UnlearnConfig:
    return UnlearnConfig(
        retrain=TrainConfig(
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            seed=derive_seed(config.seed, "train"),
        ),
        rounds=config.rounds,
        init_seed=derive_seed(config.seed, "init"),
        ascent_steps=config.ascent_steps,
        ascent_lr=config.ascent_lr,
        grad_clip_norm=config.grad_clip_norm,
        recovery_rounds=config.recovery_rounds,
    )


def _process_request(
    req_spec: RequestSpec,
    config: ScenarioConfig,
    state: FederationState,
    ledger: audit.Ledger,
    store: audit.CheckpointStore,
    probe_set: Dataset,
    active_unlearned: set[int],
) -> tuple[metrics.VerificationReport, FederationState]:
    cost = config.cost_model
    unlearn_cfg = _unlearn_config(config)
    request = UnlearningRequest(
        request_id=req_spec.request_id,
        target_client_ids=req_spec.target_client_ids,
        submitted_at=state.clock,
        deadline=req_spec.deadline_days * config.time_units_per_day,
        mode=req_spec.mode,
    )
    ledger.append(
        "RequestSubmitted",
        {
            "request_id": str(request.request_id),
            "target_client_ids": ",".join(str(t) for t in request.target_client_ids),
            "mode": request.mode,
            "deadline": repr(request.deadline),
            "submitted_at": repr(request.submitted_at),
        },
        state.clock,
    )

    plan, consensus_time = consensus_phase(request, state, cost)
    state = replace(state, clock=state.clock + consensus_time)
    ledger.append(
        "ConsensusReached",
        {
            "request_id": str(request.request_id),
            "executor": plan.executor,
            "algorithm_id": plan.algorithm_id,
            "consensus_time": repr(consensus_time),
        },
        state.clock,
    )

    pre_params = state.global_params
    pre_digest = store.store(pre_params)
    roles = assign_roles(state.clients, request.target_client_ids)
    target_clients = [c for c in roles if c.is_target]
    remaining = [c for c in roles if c.is_remaining and c.client_id not in active_unlearned]
    target_data = concat_datasets([c.dataset for c in target_clients])
    retained_datasets = [c.dataset for c in remaining]

    if request.mode == "exact_retrain":
        outcome = retrain_from_scratch(retained_datasets, config.arch, unlearn_cfg, cost, pre_params)
    else:
        outcome = gradient_ascent_unlearn(pre_params, target_data, retained_datasets, unlearn_cfg, cost)
    advance_status(request, "executed")

    # A dishonest provider ships the old model while claiming the algorithm ran.
    published = pre_params if config.faults.skip_unlearning else outcome.unlearned_params
    published_digest = store.store(published)
    state = replace(state, clock=state.clock + outcome.timings.execution)
    ledger.append(
        "UnlearningExecuted",
        {
            "request_id": str(request.request_id),
            "algorithm_id": outcome.algorithm_id,
            "execution_time": repr(outcome.timings.execution),
            "pre_unlearning_model_digest": pre_digest,
            "post_unlearning_model_digest": published_digest,
        },
        state.clock,
    )

    state = replace(state, global_params=published, clock=state.clock + cost.time_per_aggregation)
    ledger.append(
        "Aggregated",
        {
            "request_id": str(request.request_id),
            "aggregation_time": repr(cost.time_per_aggregation),
            "global_model_digest": published_digest,
        },
        state.clock,
    )

    replay_inputs = audit.ReplayInputs(
        pre_params=pre_params,
        target_data=target_data,
        retained_data=tuple(retained_datasets),
        config=unlearn_cfg,
    )
    proof = audit.ExecutionProof(
        algorithm_id=outcome.algorithm_id,
        input_digests=audit.replay_input_digests(replay_inputs),
        seed=outcome.seed,
        output_digest=published_digest,
    )
    audit.record_proof(ledger, proof, state.clock, extra={"request_id": str(request.request_id)})

    # --- verification phase -------------------------------------------------
    # Replay is deterministic, so every verifying entity (auditor + remaining
    # clients) reaches the same verdict; run it once and replicate.
    n_verifiers = len(remaining) + 1
    replay = audit.verify_proof_by_replay(proof, replay_inputs, ALGORITHM_REGISTRY)
    proof_results = [replay.accepted] * n_verifiers
    pvsr_value = metrics.pvsr(proof_results)

    # The verifier-side oracle: what honest retraining would have produced.
    if request.mode == "exact_retrain":
        benchmark = outcome.unlearned_params
    else:
        benchmark = ALGORITHM_REGISTRY["exact_retrain"](pre_params, target_data, retained_datasets, unlearn_cfg)

    if config.faults.drop_checkpoint:
        store.delete(pre_digest)
    if config.faults.tamper_ledger:
        _tamper_ledger(ledger)

    audit_value = metrics.audit_score(ledger, audit.EXPECTED_EVENT_ORDER, store)

    completeness = dict(
        {f"target_{k}": v for k, v in metrics.performance_delta(pre_params, published, target_data).items()}
    )
    residual = metrics.residual_influence(published, benchmark, probe_set)
    completeness.update({f"residual_{k}": v for k, v in residual.items()})
    if config.backdoor is not None:
        trigger = config.backdoor.trigger
        completeness["backdoor_success_pre"] = backdoor_success_rate(pre_params, probe_set, trigger)
        completeness["backdoor_success_post"] = backdoor_success_rate(published, probe_set, trigger)
    target_holdouts = [c.holdout for c in target_clients if c.holdout is not None and len(c.holdout)]
    if target_holdouts:
        nonmembers = concat_datasets(target_holdouts)
        mia_pre = mia_loss_threshold(pre_params, target_data, nonmembers)
        mia_post = mia_loss_threshold(published, target_data, nonmembers)
        completeness.update(
            {
                "mia_auc_pre": mia_pre.auc,
                "mia_auc_post": mia_post.auc,
                "mia_attack_accuracy_pre": mia_pre.attack_accuracy,
                "mia_attack_accuracy_post": mia_post.attack_accuracy,
            }
        )

    train_cfg = unlearn_cfg.retrain
    updates_pre = {c.client_id: local_update(c, pre_params, train_cfg, cost)[0] for c in remaining}
    updates_post = {c.client_id: local_update(c, published, train_cfg, cost)[0] for c in remaining}
    stability = metrics.exclusivity_stability(pre_params, published, remaining, updates_pre, updates_post)
    exclusivity: dict[str, float] = {}
    for cid, vals in sorted(stability.items()):
        for name, v in vals.items():
            exclusivity[f"{name}_c{cid}"] = v
    abs_acc = [abs(v["accuracy_delta"]) for v in stability.values()]
    exclusivity["stability_accuracy_delta"] = max(abs_acc)
    exclusivity["mean_abs_accuracy_delta"] = float(np.mean(abs_acc))
    exclusivity["min_update_cosine"] = min(v["update_cosine"] for v in stability.values())
    exclusivity["max_behavior_wasserstein"] = max(v["behavior_wasserstein"] for v in stability.values())

    try:
        restored = store.load(pre_digest)
        reversibility = metrics.reversibility_metrics(
            restored, pre_params, pre_digest, probe_set, cost.time_per_aggregation
        )
    except (audit.CheckpointMissingError, audit.CheckpointCorruptError):
        # Restoration impossible; report finite worst-case values.
        reversibility = {"performance_consistency": 1.0, "restoration_latency": 0.0, "state_integrity": 0.0}

    verification_time = cost.time_per_proof * (1 + n_verifiers) + 5 * cost.time_per_metric_eval
    timings = metrics.PhaseTimings(
        consensus=consensus_time,
        execution=outcome.timings.execution,
        aggregation=cost.time_per_aggregation,
        verification=verification_time,
    )
    breakdown = metrics.latency_breakdown(timings)
    timeliness = {
        "consensus_time": breakdown["consensus"],
        "execution_time": breakdown["execution"],
        "aggregation_time": breakdown["aggregation"],
        "verification_time": breakdown["verification"],
        "total_latency": breakdown["total"],
        "deadline": request.deadline,
        "deadline_adherence": metrics.deadline_adherence(
            breakdown["total"], request.deadline, config.adherence_mode
        ),
    }

    correctness = {
        "pvsr": pvsr_value,
        "audit_score": audit_value,
        "proofs_total": float(n_verifiers),
        "proofs_accepted": float(sum(proof_results)),
    }

    state = replace(state, clock=state.clock + verification_time)
    advance_status(request, "verified")

    report = metrics.assemble_report(
        request_id=request.request_id,
        goal_metrics={
            "completeness": completeness,
            "timeliness": timeliness,
            "correctness": correctness,
            "exclusivity": exclusivity,
            "reversibility": reversibility,
        },
        thresholds=config.thresholds,
        produced_at=state.clock,
        artifact_digests={
            "ledger_head": ledger.head_hash,
            "pre_unlearning": pre_digest,
            "post_unlearning": published_digest,
            "retrain_benchmark": audit.params_digest(benchmark),
        },
    )
    payload = {
        "request_id": str(request.request_id),
        "pvsr": repr(pvsr_value),
        "audit_score": repr(audit_value),
        "threshold_set_id": config.thresholds.threshold_set_id,
    }
    payload.update({f"verdict_{g}": report.goals[g].verdict for g in metrics.GOALS})
    ledger.append("VerificationCompleted", payload, state.clock)

    if req_spec.revoke_after_verification:
        ledger.append("RequestRevoked", {"request_id": str(request.request_id)}, state.clock)
        try:
            restored_params, restoration_time = revoke_and_restore(request, store, pre_digest, config.cost_model)
        except audit.CheckpointMissingError:
            pass  # reversibility goal already reports the failure
        else:
            state = replace(
                state, global_params=restored_params, clock=state.clock + restoration_time
            )
            ledger.append(
                "Restored",
                {
                    "request_id": str(request.request_id),
                    "restored_model_digest": audit.params_digest(restored_params),
                    "restoration_time": repr(restoration_time),
                },
                state.clock,
            )
    else:
        active_unlearned.update(request.target_client_ids)

    return report, state


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None) -> RunSummary:
    """Execute training and every unlearning request in submission order,
    verifying each; optionally emit all artifacts under out_dir."""
    wall_start = time.perf_counter()
    clients = _build_clients(config)
    state = FederationState(
        global_params=init_params(config.arch, derive_seed(config.seed, "init")),
        clients=clients,
    )
    ledger = audit.Ledger()
    store = audit.CheckpointStore()
    train_cfg = _unlearn_config(config).retrain
    state = train_federation(state, config.rounds, train_cfg, config.cost_model, store=store)
    probe_set = concat_datasets([c.holdout for c in clients])

    first_submitted = state.clock
    reports: list[metrics.VerificationReport] = []
    active_unlearned: set[int] = set()
    for req_spec in config.requests:
        report, state = _process_request(
            req_spec, config, state, ledger, store, probe_set, active_unlearned
        )
        reports.append(report)

    window = state.clock - first_submitted
    summary = RunSummary(
        reports=tuple(reports),
        final_model_digest=audit.params_digest(state.global_params),
        ledger_head=ledger.head_hash,
        simulated_elapsed=state.clock,
        request_window=window,
        throughput=metrics.throughput(len(reports), window) if window > 0 else 0.0,
        wall_runtime_seconds=time.perf_counter() - wall_start,
        ledger=ledger,
        checkpoint_store=store,
    )
    if out_dir is not None:
        emit_reports(summary, out_dir)
    return summary


# ---------------------------------------------------------------------------
# artifact emission


def _report_dict(report: metrics.VerificationReport) -> dict[str, Any]:
    return {
        "request_id": report.request_id,
        "produced_at": _round6(report.produced_at),
        "artifact_digests": dict(report.artifact_digests),
        "goals": {
            goal: {
                "verdict": g.verdict,
                "threshold_set_id": g.threshold_set_id,
                "metrics": {k: _round6(v) for k, v in sorted(g.metrics.items())},
            }
            for goal, g in report.goals.items()
        },
    }


def emit_reports(summary: RunSummary, out_dir: str | Path) -> dict[str, str]:
    """Write the ledger, checkpoint blobs, one JSON report per request, the
    request x goal summary CSV, and the run summary. All files except
    run_summary.json (which carries wall-clock runtime) are byte-deterministic
    functions of the scenario config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, str] = {}

    ledger_path = out / LEDGER_FILENAME
    audit.write_ledger(summary.ledger, ledger_path)
    paths["ledger"] = str(ledger_path)

    ckpt_dir = out / CHECKPOINT_DIRNAME
    summary.checkpoint_store.write_dir(ckpt_dir)
    paths["checkpoints"] = str(ckpt_dir)

    for report in summary.reports:
        report_path = out / f"report_{report.request_id}.json"
        report_path.write_text(
            json.dumps(_report_dict(report), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        paths[f"report_{report.request_id}"] = str(report_path)

    csv_path = out / SUMMARY_CSV_FILENAME
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["request_id", "goal", "verdict", "threshold_set_id", "metrics"])
        for report in summary.reports:
            for goal in metrics.GOALS:
                g = report.goals[goal]
                cell = ";".join(f"{k}={_round6(v):.6g}" for k, v in sorted(g.metrics.items()))
                writer.writerow([report.request_id, goal, g.verdict, g.threshold_set_id, cell])
    paths["summary_csv"] = str(csv_path)

    run_summary_path = out / RUN_SUMMARY_FILENAME
    run_summary_path.write_text(
        json.dumps(
            {
                "final_model_digest": summary.final_model_digest,
                "ledger_head": summary.ledger_head,
                "simulated_elapsed": _round6(summary.simulated_elapsed),
                "request_window": _round6(summary.request_window),
                "throughput": _round6(summary.throughput),
                "wall_runtime_seconds": summary.wall_runtime_seconds,
                "all_pass": summary.all_pass,
                "verdicts": {
                    str(r.request_id): {g: r.goals[g].verdict for g in metrics.GOALS}
                    for r in summary.reports
                },
                "files": paths,
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    paths["run_summary"] = str(run_summary_path)
    summary.paths = paths
    return paths


def verify_ledger_cmd(ledger_path: str | Path, checkpoints_dir: str | Path) -> tuple[int, list[str]]:
    """Independent auditor pass over emitted artifacts: full chain
    verification plus the three-component audit score. Exit status 0 only if
    everything checks out."""
    ledger_path = Path(ledger_path)
    checkpoints_dir = Path(checkpoints_dir)
    findings: list[str] = []
    if not ledger_path.is_file():
        return 2, [f"ledger file not found: {ledger_path}"]
    if not checkpoints_dir.is_dir():
        return 2, [f"checkpoints directory not found: {checkpoints_dir}"]

    status, entries = audit.verify_ledger_bytes(ledger_path.read_bytes())
    if not status.valid:
        findings.append(f"chain BROKEN at entry index {status.broken_at}")
        return 1, findings
    findings.append(f"chain valid ({len(entries)} entries)")

    store = audit.CheckpointStore.read_dir(checkpoints_dir)
    components = metrics.audit_components(entries, audit.EXPECTED_EVENT_ORDER, store)
    findings.append(f"lifecycle order ok: {bool(components['lifecycle'])}")
    findings.append(f"checkpoint digests resolvable: {bool(components['checkpoints'])}")
    findings.append(f"audit score: {components['score']:.6g}")
    if components["score"] < 1.0:
        return 1, findings
    return 0, findings
