"""Lemmatization pipeline orchestration, accuracy, and bootstrap intervals."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .candidates import CandidateLattice, DictionaryGenerator, generate_candidates
from .corpus_io import Sentence, Token, tokenize
from .disambig import DisambiguationResult
from .errors import AlignmentError, InvalidInputError

__all__ = [
    "SentenceStat",
    "AccuracyReport",
    "Disambiguator",
    "lemmatize_text",
    "accuracy",
    "score_sentences",
    "bootstrap_ci",
    "evaluate_corpus",
    "reports_to_json",
    "reports_to_table",
]

Disambiguator = Callable[[CandidateLattice], DisambiguationResult]


@dataclass(frozen=True)
class SentenceStat:
    sentence_id: str
    n_tokens: int
    n_correct: int

    def __post_init__(self):
        if not 0 <= self.n_correct <= self.n_tokens:
            raise InvalidInputError(
                f"sentence {self.sentence_id!r}: {self.n_correct} correct of {self.n_tokens}"
            )


@dataclass(frozen=True)
class AccuracyReport:
    method: str
    accuracy: float
    ci_low: float
    ci_high: float
    n_tokens: int
    n_sentences: int
    replicates: int
    seed: int

    def __post_init__(self):
        if self.ci_low > self.ci_high:
            raise InvalidInputError(f"ci_low {self.ci_low} > ci_high {self.ci_high}")


def lemmatize_text(
    text: str, generator: DictionaryGenerator, disambiguate: Disambiguator
) -> list[tuple[str, str]]:
    """Tokenize, generate candidates, disambiguate, and apply the rules.

    Output pairs align 1:1 with the tokens of the input text.
    """
    spans = tokenize(text)
    if not spans:
        return []
    sentence = Sentence(tuple(Token(s.form) for s in spans), "input")
    lattice = generate_candidates(generator, sentence)
    result = disambiguate(lattice)
    return [(span.form, choice.lemma) for span, choice in zip(spans, result.choices)]


def accuracy(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Exact-match, case-sensitive token accuracy over aligned sequences."""
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predictions vs {len(gold)} gold lemmas")
    if not gold:
        return 0.0
    correct = sum(1 for p, g in zip(pred, gold) if p == g)
    return correct / len(gold)


def score_sentences(
    predictions: Sequence[Sequence[str]], gold: Sequence[Sentence]
) -> list[SentenceStat]:
    """Per-sentence correct counts; tokens without a gold lemma are excluded."""
    if len(predictions) != len(gold):
        raise AlignmentError(f"{len(predictions)} predictions vs {len(gold)} sentences")
    stats = []
    for pred, sentence in zip(predictions, gold):
        if len(pred) != len(sentence.tokens):
            raise AlignmentError(
                f"sentence {sentence.sentence_id!r}: {len(pred)} predictions vs "
                f"{len(sentence.tokens)} tokens"
            )
        n_tokens = 0
        n_correct = 0
        for lemma, token in zip(pred, sentence.tokens):
            if token.lemma is None:
                continue
            n_tokens += 1
            if lemma == token.lemma:
                n_correct += 1
        stats.append(SentenceStat(sentence.sentence_id, n_tokens, n_correct))
    return stats


def _nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    rank = max(1, math.ceil(q * len(sorted_values)))
    return float(sorted_values[rank - 1])


def _replicate_accuracies(
    correct: np.ndarray, tokens: np.ndarray, replicates: int, seed: int, start: int, stop: int
) -> np.ndarray:
    n = len(correct)
    out = np.empty(stop - start)
    for b in range(start, stop):
        # one child stream per replicate index: parallel and serial runs agree
        rng = np.random.default_rng([seed, b])
        idx = rng.integers(0, n, size=n)
        total = tokens[idx].sum()
        out[b - start] = correct[idx].sum() / total if total > 0 else 0.0
    return out


def bootstrap_ci(
    stats: Sequence[SentenceStat],
    method: str = "",
    replicates: int = 1000,
    level: float = 0.95,
    seed: int = 42,
    jobs: int = 1,
) -> AccuracyReport:
    """Percentile bootstrap over sentence resamples.

    Sentences are resampled with replacement; each replicate's accuracy is
    total-correct over total-tokens.  Bounds are nearest-rank percentiles.
    Input order does not matter: stats are sorted by sentence_id first, and
    the RNG is split per replicate index, so any job count gives the same
    interval bit for bit.
    """
    if not stats:
        raise InvalidInputError("bootstrap requires at least one sentence")
    if replicates < 1:
        raise InvalidInputError("replicates must be >= 1")
    if not 0.0 < level < 1.0:
        raise InvalidInputError("level must be in (0, 1)")
    ordered = sorted(stats, key=lambda s: s.sentence_id)
    correct = np.array([s.n_correct for s in ordered], dtype=np.int64)
    tokens = np.array([s.n_tokens for s in ordered], dtype=np.int64)
    total_tokens = int(tokens.sum())
    point = float(correct.sum() / total_tokens) if total_tokens > 0 else 0.0

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, replicates, jobs + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(
                pool.map(
                    lambda se: _replicate_accuracies(correct, tokens, replicates, seed, se[0], se[1]),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        values = np.concatenate(chunks)
    else:
        values = _replicate_accuracies(correct, tokens, replicates, seed, 0, replicates)

    values.sort()
    alpha = (1.0 - level) / 2.0
    return AccuracyReport(
        method=method,
        accuracy=point,
        ci_low=_nearest_rank(values, alpha),
        ci_high=_nearest_rank(values, 1.0 - alpha),
        n_tokens=total_tokens,
        n_sentences=len(ordered),
        replicates=replicates,
        seed=seed,
    )


def evaluate_corpus(
    lattices: Sequence[CandidateLattice],
    gold: Sequence[Sentence],
    disambiguate: Disambiguator,
    method: str,
    replicates: int = 1000,
    level: float = 0.95,
    seed: int = 42,
    jobs: int = 1,
) -> AccuracyReport:
    """Disambiguate every sentence and bootstrap the accuracy."""
    if len(lattices) != len(gold):
        raise AlignmentError(f"{len(lattices)} lattices vs {len(gold)} gold sentences")
    predictions = [disambiguate(lattice).lemmas for lattice in lattices]
    stats = score_sentences(predictions, gold)
    return bootstrap_ci(
        stats, method=method, replicates=replicates, level=level, seed=seed, jobs=jobs
    )


def reports_to_json(reports: Sequence[AccuracyReport]) -> str:
    payload = [asdict(r) for r in reports]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def reports_to_table(reports: Sequence[AccuracyReport], level: float = 0.95) -> str:
    """Aligned plain-text table: one row per method with its interval."""
    rows = [
        (
            r.method,
            f"{r.accuracy:.3f}",
            f"[{r.ci_low:.3f}, {r.ci_high:.3f}]",
            str(r.n_tokens),
            str(r.n_sentences),
        )
        for r in reports
    ]
    header = ("Method", "Accuracy", f"{level:.0%} CI", "Tokens", "Sentences")
    widths = [
        max(len(header[i]), max((len(row[i]) for row in rows), default=0))
        for i in range(len(header))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
