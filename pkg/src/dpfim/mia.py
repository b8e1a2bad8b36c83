"""Gray-box membership inference attacks and ROC/AUC evaluation.

The adversary queries per-example losses from the fine-tuned target
model and, for the calibrated attack, from the public base model it
also possesses. Scores are swept into a ROC curve whose trapezoidal
area equals the member-vs-nonmember rank statistic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError
from .model import ParameterSet, losses_for_examples
from .seeding import rng_for

log = logging.getLogger(__name__)

STRATEGIES = ("raw", "calibrated")


@dataclass
class AttackRecord:
    example_id: str
    is_member: bool
    target_loss: float
    reference_loss: float
    score: float = math.nan
    is_canary: bool = False


def score_raw_loss(target_loss: float) -> float:
    """Lower loss means more member-like; negate so higher = member."""
    return -target_loss


def score_calibrated(target_loss: float, reference_loss: float) -> float:
    """Loss reduction relative to the base model (likelihood-ratio proxy)."""
    return reference_loss - target_loss


def apply_strategy(records: list[AttackRecord], strategy: str) -> list[AttackRecord]:
    if strategy == "raw":
        return [replace(r, score=score_raw_loss(r.target_loss)) for r in records]
    if strategy == "calibrated":
        return [replace(r, score=score_calibrated(r.target_loss, r.reference_loss)) for r in records]
    raise ConfigError(f"unknown attack strategy {strategy!r}; expected one of {STRATEGIES}")


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_and_auc(records: list[AttackRecord]) -> RocCurve:
    """Threshold sweep over all distinct scores plus the rank-statistic AUC.

    The returned curve starts at (0, 0), ends at (1, 1), and its
    trapezoidal integral matches P(member outscores non-member) + half
    the tie probability to 1e-12 (asserted).
    """
    scores = np.array([r.score for r in records])
    labels = np.array([r.is_member for r in records], dtype=bool)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ConfigError(f"need both classes for a ROC curve; members={n_pos}, nonmembers={n_neg}")
    if not np.all(np.isfinite(scores)):
        raise ConfigError("attack scores must be finite")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # one point per distinct threshold (tie groups collapse to a segment)
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    idx = np.concatenate([boundary, [scores.size - 1]])
    tp = np.cumsum(sorted_labels)[idx]
    fp = np.cumsum(~sorted_labels)[idx]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc_trap = float(np.trapezoid(tpr, fpr))

    ranks = rankdata(scores)  # mid-ranks on ties
    u = float(ranks[labels].sum()) - n_pos * (n_pos + 1) / 2.0
    auc_pairs = u / (n_pos * n_neg)
    if abs(auc_trap - auc_pairs) > 1e-12:
        raise AssertionError(
            f"trapezoid AUC {auc_trap!r} != pair-counting AUC {auc_pairs!r}"
        )
    return RocCurve(fpr=fpr, tpr=tpr, auc=auc_trap)


@dataclass
class AttackResult:
    strategy: str
    records: list[AttackRecord]
    curve: RocCurve
    canary_curve: RocCurve | None
    n_dropped: int


def build_attack_records(
    target: ParameterSet,
    reference: ParameterSet,
    members,
    nonmembers,
    seed: int,
    loss_batch: int = 64,
) -> tuple[list[AttackRecord], int]:
    """Balanced, scored-later records over members vs non-members.

    Members are deduplicated by id (canary copies collapse to one record
    with ``is_canary`` set); the larger class is subsampled to the
    smaller with the "attack-balance" substream so AUC is not skewed by
    prevalence. Examples whose loss evaluation fails are dropped and
    counted.
    """
    uniq = {}
    for ex in members:
        if ex.id not in uniq:
            uniq[ex.id] = ex
    members = list(uniq.values())
    if not members or not nonmembers:
        raise ConfigError(
            f"need non-empty member and non-member sets; got {len(members)}/{len(nonmembers)}"
        )
    rng = rng_for(seed, "attack-balance")
    m, n = len(members), len(nonmembers)
    if m > n:
        keep = np.sort(rng.choice(m, size=n, replace=False))
        members = [members[int(i)] for i in keep]
    elif n > m:
        keep = np.sort(rng.choice(n, size=m, replace=False))
        nonmembers = [nonmembers[int(i)] for i in keep]

    records = []
    dropped = 0
    for group, is_member in ((members, True), (nonmembers, False)):
        t_losses, t_excl = losses_for_examples(target, group, loss_batch)
        r_losses, r_excl = losses_for_examples(reference, group, loss_batch)
        bad = set(t_excl) | set(r_excl)
        for ex, tl, rl in zip(group, t_losses, r_losses):
            if ex.id in bad or not (math.isfinite(tl) and math.isfinite(rl)):
                dropped += 1
                continue
            records.append(
                AttackRecord(
                    example_id=ex.id,
                    is_member=is_member,
                    target_loss=float(tl),
                    reference_loss=float(rl),
                    is_canary=is_member and ex.is_duplicate,
                )
            )
    if dropped:
        log.warning("dropped %d examples with failed loss evaluation", dropped)
    return records, dropped


def run_attack(
    target: ParameterSet,
    reference: ParameterSet,
    members,
    nonmembers,
    strategy: str,
    seed: int,
    loss_batch: int = 64,
) -> AttackResult:
    """Score a balanced member/non-member set and build the ROC curve.

    Canary members (injected duplicates) additionally get their own
    curve against the same non-member records.
    """
    base_records, dropped = build_attack_records(
        target, reference, members, nonmembers, seed, loss_batch
    )
    return score_records(base_records, strategy, dropped)


def score_records(base_records: list[AttackRecord], strategy: str, n_dropped: int = 0) -> AttackResult:
    records = apply_strategy(base_records, strategy)
    curve = roc_and_auc(records)
    canary_records = [r for r in records if r.is_canary or not r.is_member]
    canary_curve = None
    if any(r.is_canary for r in records):
        canary_curve = roc_and_auc(canary_records)
    return AttackResult(
        strategy=strategy,
        records=records,
        curve=curve,
        canary_curve=canary_curve,
        n_dropped=n_dropped,
    )
