"""Utility metrics for generated completions: ChrF++ and Longest Match.

ChrF++ averages clipped n-gram precision and recall over character
orders 1..6 (whitespace stripped) and word orders 1..2 (whitespace
split), then combines them with an F-beta that weights recall twice as
much (beta = 2), scaled to [0, 100]. The Longest Match score thresholds
the longest run of consecutive matching lines relative to the reference
line count.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import sqrt

from .errors import ConfigError

DEFAULT_LM_THRESHOLDS: tuple[tuple[float, float], ...] = (
    (1.0, 1.0),
    (0.75, 0.75),
    (0.5, 0.5),
    (0.25, 0.25),
)


def _ngram_counts(items, n: int) -> Counter:
    return Counter(tuple(items[i : i + n]) for i in range(len(items) - n + 1))


def chrf_pp(hyp: str, ref: str, char_n: int = 6, word_n: int = 2, beta: float = 2.0) -> float:
    """Character+word n-gram F-score in [0, 100].

    Precision and recall are averaged uniformly over every order that
    has at least one reference n-gram; an order where the hypothesis has
    no n-grams contributes zero precision and recall.
    """
    if not ref:
        raise ConfigError("chrf_pp requires a non-empty reference")
    streams = []
    hyp_chars = list("".join(hyp.split()))
    ref_chars = list("".join(ref.split()))
    for n in range(1, char_n + 1):
        streams.append((hyp_chars, ref_chars, n))
    hyp_words = hyp.split()
    ref_words = ref.split()
    for n in range(1, word_n + 1):
        streams.append((hyp_words, ref_words, n))

    precisions = []
    recalls = []
    for hyp_items, ref_items, n in streams:
        ref_counts = _ngram_counts(ref_items, n)
        total_ref = sum(ref_counts.values())
        if total_ref == 0:
            continue
        hyp_counts = _ngram_counts(hyp_items, n)
        total_hyp = sum(hyp_counts.values())
        matches = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
        precisions.append(matches / total_hyp if total_hyp else 0.0)
        recalls.append(matches / total_ref)
    if not precisions:
        return 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    denom = beta * beta * p + r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta * beta) * p * r / denom


def longest_line_match(hyp_lines: list[str], ref_lines: list[str]) -> int:
    """Length of the longest common contiguous run of lines."""
    best = 0
    prev = [0] * (len(ref_lines) + 1)
    for h in hyp_lines:
        cur = [0] * (len(ref_lines) + 1)
        for j, r in enumerate(ref_lines, start=1):
            if h == r:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best = cur[j]
        prev = cur
    return best


def lm_score(
    hyp: str, ref: str, thresholds: tuple[tuple[float, float], ...] = DEFAULT_LM_THRESHOLDS
) -> float:
    """Threshold the longest consecutive-line match ratio.

    Lines are compared exactly after per-line trailing-whitespace trim;
    the ratio is longest run / reference line count, mapped through the
    (ratio_floor, value) table.
    """
    if not ref:
        raise ConfigError("lm_score requires a non-empty reference")
    ref_lines = [line.rstrip() for line in ref.splitlines()]
    hyp_lines = [line.rstrip() for line in hyp.splitlines()]
    if not ref_lines:
        return 0.0
    run = longest_line_match(hyp_lines, ref_lines)
    ratio = run / len(ref_lines)
    best = 0.0
    for floor, value in thresholds:
        if ratio >= floor and value > best:
            best = value
    return best


@dataclass
class MetricReport:
    scores: tuple[float, ...]
    mean: float
    stderr: float
    n: int
    single_sample: bool = False


def aggregate(scores) -> MetricReport:
    """Mean and standard error (sample std / sqrt(n)), order-invariant.

    Scores are sorted before reduction so any permutation of the input
    produces a bit-identical report. n = 1 yields stderr 0 with a flag.
    """
    values = sorted(float(s) for s in scores)
    n = len(values)
    if n == 0:
        raise ConfigError("aggregate requires at least one score")
    mean = sum(values) / n
    if n == 1:
        return MetricReport(scores=tuple(values), mean=mean, stderr=0.0, n=1, single_sample=True)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return MetricReport(scores=tuple(values), mean=mean, stderr=sqrt(var) / sqrt(n), n=n)
