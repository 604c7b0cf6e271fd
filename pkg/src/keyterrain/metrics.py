"""Classification metrics, top-k accounting, cross-run variance, and report files."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .labels import AddressSet


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def precision_recall_f1(
    predicted: Iterable[str], labels: AddressSet, universe: Iterable[str]
) -> Metrics:
    """Critical-class metrics for a predicted IP set.

    Membership is CIDR-aware. ``universe`` is every IP that was evaluated;
    false negatives are the labeled criticals present in it but not
    predicted. Precision or recall with a zero denominator counts as 0.
    """
    predicted = set(predicted)
    tp = sum(1 for ip in predicted if ip in labels)
    fp = len(predicted) - tp
    fn = sum(1 for ip in universe if ip in labels and ip not in predicted)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, fn, precision, recall, f1)


def topk_true_positives(
    ranking: Sequence[str],
    labels: AddressSet,
    k: int,
    local_prefixes: AddressSet | None = None,
) -> tuple[int, int]:
    """Counts over the first min(k, len(ranking)) entries of a descending ranking.

    Returns (labeled-critical count, local-prefix member count); the second
    is 0 when no local prefixes are configured.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    top = list(ranking[:k])
    tp = sum(1 for ip in top if ip in labels)
    members = 0
    if local_prefixes is not None:
        members = sum(1 for ip in top if ip in local_prefixes)
    return tp, members


def variance_of_tp(samples_by_run: Sequence[Sequence[float]]) -> float:
    """Population variance of each sample column, averaged across columns.

    ``samples_by_run`` is a runs x samples matrix; at least two runs are
    required, and every run must have the same number of samples.
    """
    arr = np.asarray(samples_by_run, dtype=float)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise ValueError("expected a non-empty runs x samples matrix")
    if arr.shape[0] < 2:
        raise ValueError("variance needs at least two runs")
    return float(np.var(arr, axis=0).mean())


def write_f1_table(
    out: IO[str], columns: Sequence[str], rows: Mapping[str, Sequence[float]]
) -> None:
    """CSV of F1 scores, one row per heuristic and one column per dataset/run."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["heuristic", *columns])
    for name, values in rows.items():
        if len(values) != len(columns):
            raise ValueError(f"row {name!r} has {len(values)} values for {len(columns)} columns")
        writer.writerow([name, *values])


def write_topk_table(
    out: IO[str],
    sample_names: Sequence[str],
    rows: Mapping[str, tuple[Sequence[float], Sequence[float], float | None]],
) -> None:
    """CSV of per-sample top-k true positives, local-member counts, and variance.

    ``rows`` maps a heuristic name to (tp per sample, local members per
    sample, cross-run variance or None).
    """
    out.write("# variance: population (divided by run count)\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["heuristic"]
        + [f"tp_{name}" for name in sample_names]
        + [f"local_{name}" for name in sample_names]
        + ["variance"]
    )
    width = len(sample_names)
    for name, (tp_values, member_values, variance) in rows.items():
        if len(tp_values) != width or len(member_values) != width:
            raise ValueError(f"row {name!r} does not match the {width} sample columns")
        writer.writerow(
            [name, *tp_values, *member_values, "" if variance is None else variance]
        )


def write_run_summary(path, summary: dict) -> None:
    """JSON summary of one run, stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
