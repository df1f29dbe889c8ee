"""Evaluation statistics: per-pair errors and their summary table.

Errors are reported in degrees and centimeters.  Summaries use the
population standard deviation and a normal-approximation 95% confidence
interval (1.96 * std / sqrt(n)); both choices are stated in the reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import EmptyListError
from .loss import PAIR_NAMES
from .transform import RigidTransform, quat_angular_distance, translation_distance

__all__ = [
    "ErrorRecord",
    "StatSummary",
    "SummaryStats",
    "error_record",
    "format_summary_table",
    "records_csv",
    "summarize",
    "summarize_by_pair",
    "summary_csv",
]


@dataclass(frozen=True)
class ErrorRecord:
    pair: str
    rotation_deg: float
    translation_cm: float


@dataclass(frozen=True)
class StatSummary:
    mean: float
    median: float
    std: float
    ci95: float


@dataclass(frozen=True)
class SummaryStats:
    rotation: StatSummary
    translation: StatSummary
    count: int


def error_record(pred: RigidTransform, gt: RigidTransform, pair: str = "") -> ErrorRecord:
    """Angular distance in degrees and translation distance in centimeters."""
    return ErrorRecord(
        pair=pair,
        rotation_deg=math.degrees(quat_angular_distance(pred.q, gt.q)),
        translation_cm=100.0 * translation_distance(pred.t, gt.t),
    )


def _stat(values: Sequence[float]) -> StatSummary:
    # Sequential two-pass arithmetic in record order, so the result is
    # reproducible by any straightforward reimplementation bit for bit.
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    ordered = sorted(values)
    if n % 2:
        median = ordered[n // 2]
    else:
        median = 0.5 * (ordered[n // 2 - 1] + ordered[n // 2])
    return StatSummary(mean=mean, median=median, std=std, ci95=1.96 * std / math.sqrt(n))


def summarize(records: Sequence[ErrorRecord]) -> SummaryStats:
    if not records:
        raise EmptyListError("no error records to summarize")
    return SummaryStats(
        rotation=_stat([r.rotation_deg for r in records]),
        translation=_stat([r.translation_cm for r in records]),
        count=len(records),
    )


def summarize_by_pair(records: Iterable[ErrorRecord]) -> dict[str, SummaryStats]:
    groups: dict[str, list[ErrorRecord]] = {}
    for record in records:
        groups.setdefault(record.pair, []).append(record)
    ordered = [name for name in PAIR_NAMES if name in groups]
    ordered += [name for name in groups if name not in ordered]
    return {name: summarize(groups[name]) for name in ordered}


def records_csv(records: Iterable[ErrorRecord]) -> str:
    lines = ["pair,rotation_deg,translation_cm"]
    lines += [f"{r.pair},{r.rotation_deg:.9g},{r.translation_cm:.9g}" for r in records]
    return "\n".join(lines) + "\n"


def summary_csv(by_pair: Mapping[str, SummaryStats]) -> str:
    lines = [
        "pair,n,transl_cm_mean,transl_cm_median,transl_cm_std,transl_cm_ci95,"
        "rot_deg_mean,rot_deg_median,rot_deg_std,rot_deg_ci95"
    ]
    for name, stats in by_pair.items():
        t, r = stats.translation, stats.rotation
        lines.append(
            f"{name},{stats.count},{t.mean:.9g},{t.median:.9g},{t.std:.9g},{t.ci95:.9g},"
            f"{r.mean:.9g},{r.median:.9g},{r.std:.9g},{r.ci95:.9g}"
        )
    return "\n".join(lines) + "\n"


def format_summary_table(by_pair: Mapping[str, SummaryStats]) -> str:
    """Human-readable table: translation cm and rotation deg, mean | median."""
    header = (
        f"{'pair':<14} {'n':>5}   {'Translation (cm)':^24}   {'Rotation (deg)':^24}\n"
        f"{'':<14} {'':>5}   {'mean':>12} {'median':>10}   {'mean':>12} {'median':>10}"
    )
    rows = []
    for name, stats in by_pair.items():
        t, r = stats.translation, stats.rotation
        rows.append(
            f"{name:<14} {stats.count:>5}   "
            f"{f'{t.mean:.2f} +- {t.ci95:.2f}':>12} {t.median:>10.2f}   "
            f"{f'{r.mean:.2f} +- {r.ci95:.2f}':>12} {r.median:>10.2f}"
        )
    note = "(population std; 95% CI = 1.96*std/sqrt(n))"
    return "\n".join([header, *rows, note]) + "\n"
