"""Active-testing instruments: backdoor injection/measurement, loss-threshold
membership inference, and an exact leave-one-out influence oracle.

All probes are pure functions; the influence oracle leans on the fully
deterministic training substrate, so repeated calls agree bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .learning import (
    Dataset,
    ModelParams,
    TrainConfig,
    evaluate,
    init_params,
    per_sample_loss,
    predict_labels,
    train,
)


@dataclass
class TriggerSpec:
    """Feature-coordinate trigger: fixed out-of-distribution values written at
    selected indices, labels flipped to the attacker's target class."""

    trigger_indices: tuple[int, ...]
    trigger_values: tuple[float, ...]
    target_label: int
    poison_fraction: float

    def __post_init__(self) -> None:
        self.trigger_indices = tuple(int(i) for i in self.trigger_indices)
        self.trigger_values = tuple(float(v) for v in self.trigger_values)
        if len(self.trigger_indices) != len(self.trigger_values):
            raise ValueError("trigger_indices and trigger_values must have equal length")
        if len(self.trigger_indices) == 0:
            raise ValueError("trigger must touch at least one feature")
        if len(set(self.trigger_indices)) != len(self.trigger_indices):
            raise ValueError("trigger_indices must be distinct")
        if any(i < 0 for i in self.trigger_indices):
            raise ValueError("trigger_indices must be non-negative")
        if self.target_label < 0:
            raise ValueError("target_label must be a valid class id")
        if not 0.0 < self.poison_fraction <= 1.0:
            raise ValueError("poison_fraction must lie in (0, 1]")

    def check_against(self, feature_dim: int, num_classes: int) -> None:
        if max(self.trigger_indices) >= feature_dim:
            raise ValueError("trigger index out of feature range")
        if self.target_label >= num_classes:
            raise ValueError("target_label exceeds num_classes")


def apply_trigger(features: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    out = np.asarray(features, dtype=np.float64).copy()
    if out.shape[1] <= max(trigger.trigger_indices):
        raise ValueError("trigger index out of feature range")
    out[:, list(trigger.trigger_indices)] = trigger.trigger_values
    return out


def inject_backdoor(dataset: Dataset, trigger: TriggerSpec, seed: int) -> Dataset:
    """Poison a deterministic poison_fraction subset: trigger values written,
    labels set to target_label, everything else bit-identical."""
    trigger.check_against(dataset.feature_dim, dataset.num_classes)
    n = len(dataset)
    count = int(round(trigger.poison_fraction * n))
    chosen = np.random.default_rng(seed).permutation(n)[:count]
    features = dataset.features.copy()
    labels = dataset.labels.copy()
    features[np.ix_(chosen, list(trigger.trigger_indices))] = trigger.trigger_values
    labels[chosen] = trigger.target_label
    return Dataset(
        features=features,
        labels=labels,
        sample_ids=dataset.sample_ids.copy(),
        num_classes=dataset.num_classes,
    )


def backdoor_success_rate(params: ModelParams, clean_test: Dataset, trigger: TriggerSpec) -> float:
    """Apply the trigger to every clean sample whose true label differs from
    the target class; return the fraction then classified as the target."""
    trigger.check_against(clean_test.feature_dim, clean_test.num_classes)
    eligible = clean_test.labels != trigger.target_label
    if not eligible.any():
        raise ValueError("no eligible samples (all labels equal target_label)")
    triggered = apply_trigger(clean_test.features[eligible], trigger)
    preds = predict_labels(params, triggered)
    return float(np.mean(preds == trigger.target_label))


@dataclass
class MiaResult:
    attack_accuracy: float
    auc: float
    threshold: float


def mia_loss_threshold(params: ModelParams, members: Dataset, nonmembers: Dataset) -> MiaResult:
    """Loss-threshold membership inference.

    Threshold is the mean member loss; a sample is predicted "member" iff its
    loss is <= threshold. attack_accuracy is the balanced accuracy of that
    rule, auc the exact probability that a random member's loss is below a
    random nonmember's (ties count 1/2).
    """
    if len(members) == 0 or len(nonmembers) == 0:
        raise ValueError("member and nonmember sets must be non-empty")
    if members.feature_dim != nonmembers.feature_dim:
        raise ValueError("feature dim mismatch")
    member_losses = per_sample_loss(params, members)
    nonmember_losses = per_sample_loss(params, nonmembers)
    threshold = float(member_losses.mean())
    tpr = float(np.mean(member_losses <= threshold))
    tnr = float(np.mean(nonmember_losses > threshold))
    sorted_non = np.sort(nonmember_losses)
    greater = sorted_non.size - np.searchsorted(sorted_non, member_losses, side="right")
    ties = np.searchsorted(sorted_non, member_losses, side="right") - np.searchsorted(
        sorted_non, member_losses, side="left"
    )
    auc = float((greater.sum() + 0.5 * ties.sum()) / (member_losses.size * sorted_non.size))
    return MiaResult(attack_accuracy=(tpr + tnr) / 2.0, auc=auc, threshold=threshold)


@dataclass
class TrainingSetup:
    """Desk-scale deterministic training run for the influence oracle."""

    dataset: Dataset
    arch: tuple[int, ...]
    config: TrainConfig
    init_seed: int


def loo_influence(training_setup: TrainingSetup, sample_id: int, probe_set: Dataset) -> float:
    """Exact leave-one-out influence: mean probe loss of the model trained
    without the sample minus mean probe loss of the model trained with it,
    under identical seeds and schedules."""
    if len(probe_set) == 0:
        raise ValueError("probe set must be non-empty")
    full = training_setup.dataset
    reduced = full.without_sample(sample_id)  # raises if unknown
    start = init_params(training_setup.arch, training_setup.init_seed)
    model_with = train(start, full, training_setup.config)
    model_without = train(start, reduced, training_setup.config)
    return evaluate(model_without, probe_set).mean_loss - evaluate(model_with, probe_set).mean_loss
