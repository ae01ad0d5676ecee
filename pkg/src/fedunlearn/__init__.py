"""Deterministic federated learning/unlearning simulator with an auditable
verification harness: hash-chained lifecycle ledger, content-addressed
checkpoints, replay execution proofs, active-testing probes, and a five-goal
metric report (completeness, timeliness, correctness, exclusivity,
reversibility)."""

from .learning import (
    Dataset,
    EvalMetrics,
    ModelParams,
    SyntheticSpec,
    TrainConfig,
    evaluate,
    init_params,
    loss_and_grad,
    make_synthetic,
    predict_proba,
    train,
)
from .federation import ClientState, CostModel, FederationState, fedavg, local_update, run_round, train_federation
from .ledger import (
    CheckpointStore,
    ExecutionProof,
    Ledger,
    LedgerEntry,
    ReplayInputs,
    canonical_bytes,
    digest,
    verify_chain,
    verify_proof_by_replay,
)
from .metrics import (
    GoalReport,
    PhaseTimings,
    Thresholds,
    VerificationReport,
    assemble_report,
    cosine_similarity,
    kl_divergence,
    linear_cka,
    wasserstein_1d,
)
from .probes import MiaResult, TriggerSpec, backdoor_success_rate, inject_backdoor, loo_influence, mia_loss_threshold
from .unlearning import (
    ALGORITHM_REGISTRY,
    UnlearnConfig,
    UnlearningOutcome,
    UnlearningRequest,
    consensus_phase,
    gradient_ascent_unlearn,
    retrain_from_scratch,
    revoke_and_restore,
)
from .scenario import RunSummary, ScenarioConfig, parse_config, run_scenario

__version__ = "0.1.0"
