"""Verification metric taxonomy: divergence/similarity primitives and the
per-goal metrics (completeness, timeliness, correctness, exclusivity,
reversibility), assembled into a threshold-judged report.

Identity cases are exact: kl(p, p) == 0.0, wasserstein(a, a) == 0.0,
cosine(u, u) == 1.0 and cka(X, X) == 1.0 return bit-exact ideals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import ledger as audit
from .federation import ClientState
from .learning import Dataset, EvalMetrics, ModelParams, evaluate, hidden_representation, predict_proba

GOALS = ("completeness", "timeliness", "correctness", "exclusivity", "reversibility")

KL_FLOOR = 1e-12


@dataclass
class PhaseTimings:
    """Simulated durations of the four lifecycle phases."""

    consensus: float = 0.0
    execution: float = 0.0
    aggregation: float = 0.0
    verification: float = 0.0

    def __post_init__(self) -> None:
        for name in ("consensus", "execution", "aggregation", "verification"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} time must be finite and non-negative")

    @property
    def total(self) -> float:
        return self.consensus + self.execution + self.aggregation + self.verification


# ---------------------------------------------------------------------------
# primitives


def _check_distribution(p: np.ndarray, name: str) -> None:
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"{name} does not sum to 1 within 1e-9")


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Sum p*ln(p/q); q clamped at KL_FLOOR, terms with p == 0 contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be 1-D and of equal length")
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    return float(_kl_rows(p[None, :], q[None, :])[0])


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    qc = np.clip(q, KL_FLOOR, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / qc), 0.0)
    return terms.sum(axis=1)


def wasserstein_1d(a: Sequence[float], b: Sequence[float]) -> float:
    """Earth-mover distance between two empirical sample sets.

    Equal sizes: mean absolute difference of the sorted samples. Otherwise:
    the area between the two empirical CDFs.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be non-empty")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    xs = np.sort(np.concatenate([a, b]))
    widths = np.diff(xs)
    fa = np.searchsorted(a, xs[:-1], side="right") / a.size
    fb = np.searchsorted(b, xs[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * widths))


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError("vectors must have equal length")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    if np.array_equal(u, v):
        return 1.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def linear_cka(x: Sequence[Sequence[float]], y: Sequence[Sequence[float]]) -> float:
    """||Xc' Yc||_F^2 / (||Xc' Xc||_F * ||Yc' Yc||_F) on column-centered matrices."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x and y must be 2-D with the same row count")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    nxx = float(np.linalg.norm(xc.T @ xc))
    nyy = float(np.linalg.norm(yc.T @ yc))
    if nxx == 0.0 or nyy == 0.0:
        raise ValueError("CKA undefined for an all-constant matrix")
    if np.array_equal(x, y):
        return 1.0
    nxy = float(np.linalg.norm(xc.T @ yc) ** 2)
    return float(np.clip(nxy / (nxx * nyy), 0.0, 1.0))


# ---------------------------------------------------------------------------
# goal metrics


def performance_delta(
    pre_params: ModelParams, post_params: ModelParams, target_data: Dataset
) -> dict[str, float]:
    """Post-minus-pre accuracy/loss on the target data; positive loss_delta is
    forgetting-consistent degradation."""
    pre = evaluate(pre_params, target_data)
    post = evaluate(post_params, target_data)
    return {
        "accuracy_delta": post.accuracy - pre.accuracy,
        "loss_delta": post.mean_loss - pre.mean_loss,
    }


def residual_influence(
    unlearned_params: ModelParams, benchmark_params: ModelParams, probe_data: Dataset
) -> dict[str, float]:
    """Distance of the unlearned model from the retrain benchmark: weight-space
    cosine distance, mean per-sample KL(benchmark || unlearned) over the probe
    set, and CKA of the penultimate representations."""
    if unlearned_params.arch != benchmark_params.arch:
        raise ValueError("architecture mismatch")
    if len(probe_data) == 0:
        raise ValueError("probe data must be non-empty")
    p_bench = predict_proba(benchmark_params, probe_data.features)
    p_unl = predict_proba(unlearned_params, probe_data.features)
    output_kl = 0.0 if np.array_equal(p_bench, p_unl) else float(np.mean(_kl_rows(p_bench, p_unl)))
    rep_unl = hidden_representation(unlearned_params, probe_data.features)
    rep_bench = hidden_representation(benchmark_params, probe_data.features)
    return {
        "param_cosine_distance": 1.0
        - cosine_similarity(unlearned_params.coefficients, benchmark_params.coefficients),
        "output_kl": output_kl,
        "cka_similarity": linear_cka(rep_unl, rep_bench),
    }


def latency_breakdown(timings: PhaseTimings) -> dict[str, float]:
    return {
        "consensus": timings.consensus,
        "execution": timings.execution,
        "aggregation": timings.aggregation,
        "verification": timings.verification,
        "total": timings.total,
    }


def throughput(completed_count: int, window: float) -> float:
    """Requests completed per simulated time unit."""
    if window <= 0:
        raise ValueError("window must be positive")
    return completed_count / window


def deadline_adherence(total_latency: float, deadline: float, mode: str = "binary") -> float:
    """Compliance score in [0, 1]; binary hit/miss or proportional min(1, deadline/latency)."""
    if deadline <= 0:
        raise ValueError("deadline must be positive")
    if mode not in ("binary", "proportional"):
        raise ValueError(f"unknown adherence mode {mode!r}")
    if total_latency <= deadline:
        return 1.0
    return 0.0 if mode == "binary" else float(deadline / total_latency)


def pvsr(proof_results: Sequence[bool]) -> float:
    """Fraction of verification verdicts that accepted the execution proof."""
    if len(proof_results) == 0:
        raise ValueError("pvsr undefined for zero proof results")
    return float(sum(bool(r) for r in proof_results)) / len(proof_results)


def _lifecycle_order_ok(entries: Sequence[audit.LedgerEntry], schema: Sequence[str]) -> bool:
    # Per request: the schema-typed events must form a prefix of the schema
    # order, and any optional revoke/restore events must follow a completed
    # verification, in revoke -> restore order.
    per_request: dict[str, list[str]] = {}
    for e in entries:
        rid = e.payload.get("request_id")
        if rid is not None:
            per_request.setdefault(rid, []).append(e.event_type)
    schema = list(schema)
    for events in per_request.values():
        required = [t for t in events if t in schema]
        if not required or required != schema[: len(required)]:
            return False
        optional = [t for t in events if t in audit.OPTIONAL_EVENT_ORDER]
        if optional:
            if required != schema:
                return False
            if optional != list(audit.OPTIONAL_EVENT_ORDER)[: len(optional)]:
                return False
            first_optional = events.index(optional[0])
            if any(t in schema for t in events[first_optional:]):
                return False
    return True


def audit_components(
    ledger: audit.Ledger | Sequence[audit.LedgerEntry],
    expected_event_schema: Sequence[str],
    checkpoint_store: audit.CheckpointStore,
) -> dict[str, float]:
    """Three 0/1 indicators plus their mean: hash chain intact, lifecycle
    events in schema order, and every payload key ending in 'model_digest'
    resolvable in the checkpoint store under content addressing."""
    entries = ledger.entries if isinstance(ledger, audit.Ledger) else list(ledger)
    chain_component = 1.0 if audit.verify_chain(entries).valid else 0.0
    schema_component = 1.0 if _lifecycle_order_ok(entries, expected_event_schema) else 0.0
    digests_component = 1.0
    for e in entries:
        for key, value in e.payload.items():
            if key.endswith("model_digest"):
                try:
                    checkpoint_store.load(value)
                except (audit.CheckpointMissingError, audit.CheckpointCorruptError, ValueError):
                    digests_component = 0.0
    return {
        "chain": chain_component,
        "lifecycle": schema_component,
        "checkpoints": digests_component,
        "score": (chain_component + schema_component + digests_component) / 3.0,
    }


def audit_score(
    ledger: audit.Ledger | Sequence[audit.LedgerEntry],
    expected_event_schema: Sequence[str],
    checkpoint_store: audit.CheckpointStore,
) -> float:
    return audit_components(ledger, expected_event_schema, checkpoint_store)["score"]


def exclusivity_stability(
    pre_params: ModelParams,
    post_params: ModelParams,
    remaining_clients: Sequence[ClientState],
    last_updates_pre: Mapping[int, np.ndarray],
    last_updates_post: Mapping[int, np.ndarray],
) -> dict[int, dict[str, float]]:
    """Per-remaining-client stability: accuracy/loss deltas on the fixed local
    holdout, cosine of the recorded pre/post local updates, and 1-D Wasserstein
    between the max-class-probability distributions on the client's data."""
    out: dict[int, dict[str, float]] = {}
    for client in remaining_clients:
        cid = client.client_id
        if cid not in last_updates_pre or cid not in last_updates_post:
            raise ValueError(f"missing recorded updates for client {cid}")
        if client.holdout is None or len(client.holdout) == 0:
            raise ValueError(f"client {cid} has no fixed holdout split")
        pre_eval = evaluate(pre_params, client.holdout)
        post_eval = evaluate(post_params, client.holdout)
        conf_pre = predict_proba(pre_params, client.dataset.features).max(axis=1)
        conf_post = predict_proba(post_params, client.dataset.features).max(axis=1)
        out[cid] = {
            "accuracy_delta": post_eval.accuracy - pre_eval.accuracy,
            "loss_delta": post_eval.mean_loss - pre_eval.mean_loss,
            "update_cosine": cosine_similarity(last_updates_pre[cid], last_updates_post[cid]),
            "behavior_wasserstein": wasserstein_1d(conf_pre, conf_post),
        }
    return out


def reversibility_metrics(
    restored_params: ModelParams,
    pre_unlearning_params: ModelParams,
    pre_unlearning_digest: str,
    test_set: Dataset,
    restoration_time: float,
) -> dict[str, float]:
    """Restore fidelity: |accuracy difference| on the fixed test set, echoed
    restoration latency, and a 0/1 digest-equality integrity flag."""
    restored_eval = evaluate(restored_params, test_set)
    pre_eval = evaluate(pre_unlearning_params, test_set)
    integrity = audit.params_digest(restored_params) == pre_unlearning_digest
    return {
        "performance_consistency": abs(restored_eval.accuracy - pre_eval.accuracy),
        "restoration_latency": float(restoration_time),
        "state_integrity": 1.0 if integrity else 0.0,
    }


# ---------------------------------------------------------------------------
# thresholds and report assembly


@dataclass
class Thresholds:
    """Named per-goal bounds. Keys are 'max_<metric>' (metric <= bound) or
    'min_<metric>' (metric >= bound); bounds on metrics absent from a goal's
    map are ignored, so one threshold set can serve scenarios with and
    without optional probes."""

    bounds: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for goal, goal_bounds in self.bounds.items():
            if goal not in GOALS:
                raise ValueError(f"unknown goal {goal!r}")
            for name, bound in goal_bounds.items():
                if not (name.startswith("max_") or name.startswith("min_")):
                    raise ValueError(f"threshold {name!r} must start with max_ or min_")
                if not np.isfinite(bound):
                    raise ValueError(f"threshold {name!r} must be finite")

    @property
    def threshold_set_id(self) -> str:
        flat = {
            f"{goal}.{name}": repr(float(bound))
            for goal, goal_bounds in sorted(self.bounds.items())
            for name, bound in sorted(goal_bounds.items())
        }
        return audit.map_digest(flat)[:12]

    def verdict(self, goal: str, metric_values: Mapping[str, float]) -> str:
        for name, bound in self.bounds.get(goal, {}).items():
            metric = metric_values.get(name[4:])
            if metric is None:
                continue
            if name.startswith("max_") and metric > bound:
                return "fail"
            if name.startswith("min_") and metric < bound:
                return "fail"
        return "pass"


def default_thresholds() -> Thresholds:
    """Acceptance conventions; these are artifact defaults, not values any
    external source prescribes. Scenario configs may override per goal."""
    return Thresholds(
        bounds={
            "completeness": {"max_backdoor_success_post": 0.2, "max_residual_output_kl": 0.5},
            "timeliness": {"min_deadline_adherence": 1.0},
            "correctness": {"min_pvsr": 1.0, "min_audit_score": 1.0},
            "exclusivity": {"max_stability_accuracy_delta": 0.05},
            "reversibility": {"min_state_integrity": 1.0, "max_performance_consistency": 0.01},
        }
    )


@dataclass(frozen=True)
class GoalReport:
    goal: str
    metrics: dict[str, float]
    verdict: str
    threshold_set_id: str


@dataclass(frozen=True)
class VerificationReport:
    request_id: int
    goals: dict[str, GoalReport]
    produced_at: float
    artifact_digests: dict[str, str]

    @property
    def all_pass(self) -> bool:
        return all(g.verdict == "pass" for g in self.goals.values())


def assemble_report(
    request_id: int,
    goal_metrics: Mapping[str, Mapping[str, float]],
    thresholds: Thresholds,
    produced_at: float,
    artifact_digests: Mapping[str, str],
) -> VerificationReport:
    """Pure function of its inputs: one GoalReport per goal, verdicts from the
    threshold set alone."""
    missing = [g for g in GOALS if g not in goal_metrics]
    if missing:
        raise ValueError(f"missing metric inputs for goals {missing}")
    goals: dict[str, GoalReport] = {}
    for goal in GOALS:
        values = {k: float(v) for k, v in goal_metrics[goal].items()}
        bad = [k for k, v in values.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite metrics for goal {goal}: {bad}")
        goals[goal] = GoalReport(
            goal=goal,
            metrics=values,
            verdict=thresholds.verdict(goal, values),
            threshold_set_id=thresholds.threshold_set_id,
        )
    return VerificationReport(
        request_id=request_id,
        goals=goals,
        produced_at=float(produced_at),
        artifact_digests=dict(artifact_digests),
    )
