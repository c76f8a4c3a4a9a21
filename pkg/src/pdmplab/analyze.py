"""Modality analysis: dominance profiling and mutual-information diagnostics.

The analysis stage trains one unimodal model per modality (same encoder
architecture plus a private classification head, same optimizer settings).
The performance-dominant modality m_p is the best final validation accuracy.
The optimization-dominant modality m_o comes from one of two methods:

    branch_ranking   rank per-modality branch accuracy of a vanilla
                     multimodal probe trained for the same number of epochs;
                     the ranking statistic is each branch's mean validation
                     accuracy over the probe's epochs, which captures who
                     dominated the optimization rather than who happened to
                     lead at the final step
    early_unimodal   rank unimodal validation accuracy at an early epoch
                     (networks fit easy patterns first, so an early lead
                     marks the modality that will dominate joint gradients)

Ranking ties always break to the lower modality index. All trainings are
seeded from purpose-keyed children of the run seed; the unimodal runs share
one child seed so equally-matched modalities get identical draws.
"""

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datagen, harness, model
from .datagen import Dataset
from .errors import InputError
from .numkit import Rng, child_seed

M_O_METHODS = ("branch_ranking", "early_unimodal")


@dataclass(frozen=True)
class AnalysisConfig:
    epochs: int | None = None        # default: the train config's epochs
    subset_fraction: float = 1.0
    early_epoch: int | None = None   # default: max(1, epochs // 10)
    method: str = "branch_ranking"


@dataclass(frozen=True)
class ModalityProfile:
    m_p: int
    m_o: int
    unimodal_final_acc: tuple[float, ...]
    unimodal_early_acc: tuple[float, ...]
    multimodal_branch_acc: tuple[float, ...]
    method_used: str
    subset_fraction: float


@dataclass
class AnalysisResult:
    profile: ModalityProfile
    unimodal_curves: list[list[float]]  # per modality, val accuracy at epochs 1..T


def rank_top(values) -> int:
    """Index of the largest value, ties to the lower index."""
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def run_modality_analysis(
    dataset: Dataset,
    train_config: harness.TrainConfig,
    analysis: AnalysisConfig = AnalysisConfig(),
) -> AnalysisResult:
    if analysis.method not in M_O_METHODS:
        raise InputError(f"unknown m_o method {analysis.method!r}; known: {M_O_METHODS}")
    epochs = analysis.epochs if analysis.epochs is not None else train_config.epochs
    if epochs < 1:
        raise InputError(f"analysis epochs must be >= 1, got {epochs}")
    early = (analysis.early_epoch if analysis.early_epoch is not None
             else max(1, epochs // 10))
    if not 1 <= early <= epochs:
        raise InputError(f"early_epoch {early} outside [1, {epochs}]")
    if not 0 < analysis.subset_fraction <= 1:
        raise InputError(
            f"subset_fraction must be in (0, 1], got {analysis.subset_fraction}"
        )

    k = dataset.num_modalities
    seed = train_config.seed
    if analysis.subset_fraction < 1.0:
        sub_rng = Rng(child_seed(seed, "analysis-subset"))
        train_split = datagen.stratified_subset(
            dataset.splits["train"], analysis.subset_fraction, sub_rng,
            dataset.num_classes,
        )
    else:
        train_split = dataset.splits["train"]
    stage_dataset = Dataset(spec=dataset.spec, splits={
        "train": train_split,
        "val": dataset.splits["val"],
        "test": dataset.splits["test"],
    })

    base = dataclasses.replace(
        train_config, epochs=epochs, eval_every=1, strategy={"kind": "vanilla"},
    )

    curves: list[list[float]] = []
    for i in range(k):
        uni_cfg = dataclasses.replace(base, seed=child_seed(seed, "analysis-unimodal"))
        log = harness.train(uni_cfg, dataset=datagen.project_dataset(stage_dataset, i))
        curves.append([r.val_acc for r in log.records])
    final_acc = tuple(c[epochs - 1] for c in curves)
    early_acc = tuple(c[early - 1] for c in curves)

    probe_cfg = dataclasses.replace(base, seed=child_seed(seed, "analysis-probe"))
    probe_log = harness.train(probe_cfg, dataset=stage_dataset)
    branch_acc = tuple(
        sum(r.branch_acc[i] for r in probe_log.records) / len(probe_log.records)
        for i in range(k)
    )

    m_p = rank_top(final_acc)
    m_o = rank_top(branch_acc if analysis.method == "branch_ranking" else early_acc)
    profile = ModalityProfile(
        m_p=m_p, m_o=m_o,
        unimodal_final_acc=final_acc,
        unimodal_early_acc=early_acc,
        multimodal_branch_acc=branch_acc,
        method_used=analysis.method,
        subset_fraction=analysis.subset_fraction,
    )
    return AnalysisResult(profile=profile, unimodal_curves=curves)


def profile_to_dict(profile: ModalityProfile) -> dict:
    return {
        "m_p": profile.m_p,
        "m_o": profile.m_o,
        "unimodal_final_acc": list(profile.unimodal_final_acc),
        "unimodal_early_acc": list(profile.unimodal_early_acc),
        "multimodal_branch_acc": list(profile.multimodal_branch_acc),
        "method_used": profile.method_used,
        "subset_fraction": profile.subset_fraction,
    }


def profile_from_dict(raw: dict) -> ModalityProfile:
    return ModalityProfile(
        m_p=int(raw["m_p"]), m_o=int(raw["m_o"]),
        unimodal_final_acc=tuple(raw["unimodal_final_acc"]),
        unimodal_early_acc=tuple(raw["unimodal_early_acc"]),
        multimodal_branch_acc=tuple(raw["multimodal_branch_acc"]),
        method_used=raw["method_used"],
        subset_fraction=float(raw["subset_fraction"]),
    )


def save_profile(profile: ModalityProfile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(profile), indent=2) + "\n")


def load_profile(path: str | Path) -> ModalityProfile:
    return profile_from_dict(json.loads(Path(path).read_text()))


def curves_to_csv(curves: list[list[float]]) -> str:
    k = len(curves)
    lines = ["epoch," + ",".join(f"unimodal_acc_{i}" for i in range(k))]
    for e in range(len(curves[0])):
        lines.append(",".join([str(e + 1)] + [repr(curves[i][e]) for i in range(k)]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Plug-in mutual information on argmax-discretized outputs
# ---------------------------------------------------------------------------

@dataclass
class MIEstimate:
    bits: float
    joint_counts: np.ndarray  # (M, M), predicted class x true class


def estimate_mi(predictions, labels, num_classes: int) -> MIEstimate:
    """Plug-in discrete mutual information, in bits.

    I = sum_{p,t} P(p,t) * log2(P(p,t) / (P(p) P(t))) over the empirical
    joint of (predicted, true); zero-count cells contribute zero. The
    plug-in estimator is biased upward for small samples; no correction is
    applied.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.size == 0:
        raise InputError("cannot estimate mutual information from empty input")
    if predictions.shape != labels.shape:
        raise InputError(
            f"length mismatch: {predictions.shape} predictions vs {labels.shape} labels"
        )
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise InputError(f"{name} must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (predictions, labels), 1)
    n = predictions.size
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)
    bits = 0.0
    for p in range(num_classes):
        for t in range(num_classes):
            c = counts[p, t]
            if c:
                p_joint = c / n
                bits += p_joint * math.log2(p_joint / ((row[p] / n) * (col[t] / n)))
    return MIEstimate(bits=max(bits, 0.0), joint_counts=counts)


@dataclass
class MIDominanceReport:
    branch: list[MIEstimate]  # per modality, MI of argmax(s_i) with the labels
    fused: MIEstimate


def mi_dominance_report(state: model.ModelState, features: list[np.ndarray],
                        labels: np.ndarray) -> MIDominanceReport:
    """MI of each branch's predictions and of the fused predictions."""
    _, cache = model.forward(state, features)
    branch = [
        estimate_mi(model.branch_predictions(cache, i), labels, state.num_classes)
        for i in range(state.num_modalities)
    ]
    fused = estimate_mi(np.argmax(cache.logits, axis=1), labels, state.num_classes)
    return MIDominanceReport(branch=branch, fused=fused)
