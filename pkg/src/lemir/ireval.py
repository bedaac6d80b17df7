"""Recall@k, MAP@k, and Success@k over TREC-style runs and graded qrels.

Queries with zero relevant documents are skipped, never averaged.  AP@k is
normalized by min(|relevant|, k), which makes MAP@1 identical to Success@1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import InvalidInputError

__all__ = [
    "relevant_set",
    "recall_at_k",
    "success_at_k",
    "ap_at_k",
    "MetricsReport",
    "evaluate_run",
    "metrics_to_json",
    "metrics_to_table",
]

DEFAULT_KS = (1, 5, 100)


def relevant_set(qrels: Mapping[tuple[str, str], int], query_id: str) -> set[str]:
    """Documents judged relevant (grade >= 1) for the query."""
    return {
        doc_id for (qid, doc_id), grade in qrels.items() if qid == query_id and grade >= 1
    }


def _check(relevant: set[str], k: int) -> None:
    if not relevant:
        raise InvalidInputError("metrics are undefined for an empty relevant set")
    if k < 1:
        raise InvalidInputError("k must be >= 1")


def recall_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    _check(relevant, k)
    hits = sum(1 for doc_id in ranked[:k] if doc_id in relevant)
    return hits / len(relevant)


def success_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> int:
    _check(relevant, k)
    return 1 if any(doc_id in relevant for doc_id in ranked[:k]) else 0


def ap_at_k(ranked: Sequence[str], relevant: set[str], k: int) -> float:
    """(sum of Precision@i over relevant ranks i <= k) / min(|relevant|, k)."""
    _check(relevant, k)
    hits = 0
    precision_sum = 0.0
    for i, doc_id in enumerate(ranked[:k], start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / i
    return precision_sum / min(len(relevant), k)


@dataclass(frozen=True)
class MetricsReport:
    name: str
    ks: tuple[int, ...]
    recall: dict[int, float]
    mean_ap: dict[int, float]
    success: dict[int, float]
    n_queries_evaluated: int
    n_queries_skipped: int

    def __post_init__(self):
        for table in (self.recall, self.mean_ap, self.success):
            for value in table.values():
                if not 0.0 <= value <= 1.0:
                    raise InvalidInputError(f"metric value {value} outside [0, 1]")


def evaluate_run(
    run: Mapping[str, Sequence[tuple[str, float]]],
    qrels: Mapping[tuple[str, str], int],
    ks: Sequence[int] = DEFAULT_KS,
    name: str = "run",
) -> MetricsReport:
    """Mean metrics over every judged query with at least one relevant doc.

    The evaluation set is the qrels' queries: a judged query missing from
    the run scores zero, and run queries without judgments count as skipped.
    """
    ks = tuple(ks)
    if not ks or any(k < 1 for k in ks):
        raise InvalidInputError("ks must be positive")
    evaluated = 0
    skipped = 0
    sums = {
        "recall": {k: 0.0 for k in ks},
        "ap": {k: 0.0 for k in ks},
        "success": {k: 0.0 for k in ks},
    }
    by_query: dict[str, set[str]] = {}
    for (qid, doc_id), grade in qrels.items():
        if grade >= 1:
            by_query.setdefault(qid, set()).add(doc_id)
    query_ids = sorted({qid for qid, _ in qrels} | set(run))
    for query_id in query_ids:
        relevant = by_query.get(query_id, set())
        if not relevant:
            skipped += 1
            continue
        evaluated += 1
        ranked = [doc_id for doc_id, _ in run.get(query_id, [])]
        for k in ks:
            sums["recall"][k] += recall_at_k(ranked, relevant, k)
            sums["ap"][k] += ap_at_k(ranked, relevant, k)
            sums["success"][k] += success_at_k(ranked, relevant, k)
    if evaluated == 0:
        raise InvalidInputError("no query has a relevant document; nothing to evaluate")
    return MetricsReport(
        name=name,
        ks=ks,
        recall={k: sums["recall"][k] / evaluated for k in ks},
        mean_ap={k: sums["ap"][k] / evaluated for k in ks},
        success={k: sums["success"][k] / evaluated for k in ks},
        n_queries_evaluated=evaluated,
        n_queries_skipped=skipped,
    )


def metrics_to_json(reports: Sequence[MetricsReport]) -> str:
    payload = []
    for r in reports:
        payload.append(
            {
                "name": r.name,
                "ks": list(r.ks),
                "recall": {str(k): v for k, v in r.recall.items()},
                "map": {str(k): v for k, v in r.mean_ap.items()},
                "success": {str(k): v for k, v in r.success.items()},
                "n_queries_evaluated": r.n_queries_evaluated,
                "n_queries_skipped": r.n_queries_skipped,
            }
        )
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def metrics_to_table(reports: Sequence[MetricsReport]) -> str:
    """One row per run, metric@k columns, 4-decimal values."""
    if not reports:
        return "\n"
    ks = reports[0].ks
    header = ["Run"]
    for k in ks:
        header.append(f"R@{k}")
    for k in ks:
        header.append(f"MAP@{k}")
    for k in ks:
        header.append(f"S@{k}")
    rows = []
    for r in reports:
        if r.ks != ks:
            raise InvalidInputError("all reports in one table must share the same ks")
        row = [r.name]
        row += [f"{r.recall[k]:.4f}" for k in ks]
        row += [f"{r.mean_ap[k]:.4f}" for k in ks]
        row += [f"{r.success[k]:.4f}" for k in ks]
        rows.append(row)
    widths = [max(len(header[i]), max(len(row[i]) for row in rows)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
