"""Disambiguation strategies: pick one rule per token from a candidate lattice.

Four strategies are provided: an oracle (upper bound), a count-based
frequency baseline, a bigram HMM decoded with Viterbi, and span-label
similarity matching against a pluggable scorer.  A deterministic
feature-hashing scorer backend is included so the span matcher runs without
any external process.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from . import editscript
from .candidates import DO_NOTHING_RULE, Candidate, CandidateLattice, MAX_SUFFIX_LEN
from .corpus_io import Sentence
from .errors import AlignmentError, InvalidInputError, LemirError

__all__ = [
    "TokenChoice",
    "DisambiguationResult",
    "FrequencyModel",
    "HmmModel",
    "SpanMatcherConfig",
    "SpanScorer",
    "ScoreMatrixError",
    "ScorerInvocationError",
    "BOS",
    "oracle_disambiguate",
    "train_frequency",
    "freq_disambiguate",
    "train_hmm",
    "hmm_disambiguate",
    "span_match_disambiguate",
    "reference_embed_spans",
    "reference_embed_labels",
    "reference_score",
    "ReferenceSpanScorer",
]

BOS = "<s>"  # cannot collide with rule strings, which always start with "U"


class ScoreMatrixError(LemirError):
    """A scorer returned a matrix with wrong shape or out-of-range values."""


class ScorerInvocationError(LemirError):
    """A scorer failed while scoring a sentence; the cause is chained."""


@dataclass(frozen=True)
class TokenChoice:
    chosen_rule: str
    lemma: str
    score: float


@dataclass(frozen=True)
class DisambiguationResult:
    choices: tuple[TokenChoice, ...]

    @property
    def lemmas(self) -> list[str]:
        return [c.lemma for c in self.choices]

    @property
    def total_score(self) -> float:
        """Sum of per-token scores; for the HMM this is the path log-probability."""
        total = 0.0
        for c in self.choices:
            total += c.score
        return total


def _check_aligned(lattice: CandidateLattice, gold: Sentence) -> None:
    if len(lattice.sets) != len(gold.tokens):
        raise AlignmentError(
            f"sentence {gold.sentence_id!r}: {len(lattice.sets)} candidate sets vs "
            f"{len(gold.tokens)} gold tokens"
        )


def _do_nothing_choice(cand_set, score: float) -> TokenChoice:
    for c in cand_set.candidates:
        if c.rule == DO_NOTHING_RULE:
            return TokenChoice(c.rule, c.lemma, score)
    raise AssertionError("candidate sets always contain the do-nothing rule")


def oracle_disambiguate(lattice: CandidateLattice, gold: Sentence) -> DisambiguationResult:
    """Pick the candidate matching the gold lemma; do-nothing when absent.

    Scores are 1.0 on a hit and 0.0 otherwise, so the mean score equals the
    oracle accuracy.
    """
    _check_aligned(lattice, gold)
    choices = []
    for cand_set, token in zip(lattice.sets, gold.tokens):
        hit = None
        if token.lemma is not None:
            for c in cand_set.candidates:  # sorted by rule: ties go to the smaller rule
                if c.lemma == token.lemma:
                    hit = c
                    break
        if hit is not None:
            choices.append(TokenChoice(hit.rule, hit.lemma, 1.0))
        else:
            choices.append(_do_nothing_choice(cand_set, 0.0))
    return DisambiguationResult(tuple(choices))


# --------------------------------------------------------------------------
# Frequency baseline
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyModel:
    """Gold-rule counts keyed by form, by form suffix (1..5), and globally."""

    form_counts: dict[str, dict[str, int]]
    suffix_counts: dict[str, dict[str, int]]
    global_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "form_counts": self.form_counts,
            "suffix_counts": self.suffix_counts,
            "global_counts": self.global_counts,
        }

    @staticmethod
    def from_dict(obj: dict) -> "FrequencyModel":
        return FrequencyModel(
            form_counts={k: dict(v) for k, v in obj["form_counts"].items()},
            suffix_counts={k: dict(v) for k, v in obj["suffix_counts"].items()},
            global_counts=dict(obj["global_counts"]),
        )


def _gold_rules(
    lattices: Sequence[CandidateLattice], gold: Sequence[Sentence]
) -> list[list[tuple[str, str]]]:
    """Per sentence, (lowercased form, gold rule string) pairs."""
    if len(lattices) != len(gold):
        raise AlignmentError(f"{len(lattices)} lattices vs {len(gold)} gold sentences")
    out = []
    for lattice, sentence in zip(lattices, gold):
        _check_aligned(lattice, sentence)
        pairs = []
        for token in sentence.tokens:
            if token.lemma is None:
                continue
            rule = editscript.format_rule(editscript.extract_rule(token.form, token.lemma))
            pairs.append((editscript.scalar_lower(token.form), rule))
        out.append(pairs)
    return out


def train_frequency(
    lattices: Sequence[CandidateLattice], gold: Sequence[Sentence]
) -> FrequencyModel:
    form_counts: dict[str, Counter[str]] = {}
    suffix_counts: dict[str, Counter[str]] = {}
    global_counts: Counter[str] = Counter()
    for pairs in _gold_rules(lattices, gold):
        for key, rule in pairs:
            form_counts.setdefault(key, Counter())[rule] += 1
            for length in range(1, min(MAX_SUFFIX_LEN, len(key)) + 1):
                suffix_counts.setdefault(key[-length:], Counter())[rule] += 1
            global_counts[rule] += 1
    return FrequencyModel(
        form_counts={k: dict(v) for k, v in form_counts.items()},
        suffix_counts={k: dict(v) for k, v in suffix_counts.items()},
        global_counts=dict(global_counts),
    )


def _argmax_by_count(
    table: dict[str, int] | None, candidates: Sequence[Candidate]
) -> TokenChoice | None:
    if not table:
        return None
    best = None
    best_count = 0
    for c in candidates:  # sorted by rule: ties resolve to the smaller rule string
        count = table.get(c.rule, 0)
        if count > best_count:
            best, best_count = c, count
    if best is None:
        return None
    return TokenChoice(best.rule, best.lemma, best_count / sum(table.values()))


def freq_disambiguate(model: FrequencyModel, lattice: CandidateLattice) -> DisambiguationResult:
    """Most frequent candidate rule for the form; suffix then global backoff."""
    choices = []
    for cand_set, token in zip(lattice.sets, lattice.sentence.tokens):
        key = editscript.scalar_lower(token.form)
        cands = cand_set.candidates
        choice = _argmax_by_count(model.form_counts.get(key), cands)
        if choice is None:
            for length in range(min(MAX_SUFFIX_LEN, len(key)), 0, -1):
                choice = _argmax_by_count(model.suffix_counts.get(key[-length:]), cands)
                if choice is not None:
                    break
        if choice is None:
            choice = _argmax_by_count(model.global_counts, cands)
        if choice is None:
            best = cands[0]  # lexicographically smallest rule
            choice = TokenChoice(best.rule, best.lemma, 0.0)
        choices.append(choice)
    return DisambiguationResult(tuple(choices))


# --------------------------------------------------------------------------
# Bigram HMM
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HmmModel:
    """Bigram HMM over rule states with add-alpha/add-beta smoothing.

    Transitions: P(r | r') = (c(r', r) + alpha) / (c_out(r') + alpha * |R|).
    Emissions:   P(f | r) = (c(f, r) + beta) / (c(r) + beta * (V + 1)).
    """

    alpha: float
    beta: float
    transition_counts: dict[str, dict[str, int]]  # prev rule (or BOS) -> rule -> count
    emission_counts: dict[str, dict[str, int]]  # rule -> lowercased form -> count

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise InvalidInputError("smoothing parameters must be positive")
        states = set()
        for prev, row in self.transition_counts.items():
            states.update(row)
        states.update(self.emission_counts)
        forms = set()
        for row in self.emission_counts.values():
            forms.update(row)
        object.__setattr__(self, "_state_count", max(1, len(states)))
        object.__setattr__(self, "_vocab_size", len(forms))
        object.__setattr__(
            self, "_trans_totals", {p: sum(row.values()) for p, row in self.transition_counts.items()}
        )
        object.__setattr__(
            self, "_emit_totals", {r: sum(row.values()) for r, row in self.emission_counts.items()}
        )

    def transition_prob(self, prev: str, rule: str) -> float:
        count = self.transition_counts.get(prev, {}).get(rule, 0)
        total = self._trans_totals.get(prev, 0)
        return (count + self.alpha) / (total + self.alpha * self._state_count)

    def emission_prob(self, form_key: str, rule: str) -> float:
        count = self.emission_counts.get(rule, {}).get(form_key, 0)
        total = self._emit_totals.get(rule, 0)
        return (count + self.beta) / (total + self.beta * (self._vocab_size + 1))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "transitions": self.transition_counts,
            "emissions": self.emission_counts,
        }

    @staticmethod
    def from_dict(obj: dict) -> "HmmModel":
        return HmmModel(
            alpha=float(obj["alpha"]),
            beta=float(obj["beta"]),
            transition_counts={k: dict(v) for k, v in obj["transitions"].items()},
            emission_counts={k: dict(v) for k, v in obj["emissions"].items()},
        )


def train_hmm(
    lattices: Sequence[CandidateLattice],
    gold: Sequence[Sentence],
    alpha: float = 0.1,
    beta: float = 0.01,
) -> HmmModel:
    transitions: dict[str, Counter[str]] = {}
    emissions: dict[str, Counter[str]] = {}
    for pairs in _gold_rules(lattices, gold):
        prev = BOS
        for key, rule in pairs:
            transitions.setdefault(prev, Counter())[rule] += 1
            emissions.setdefault(rule, Counter())[key] += 1
            prev = rule
    return HmmModel(
        alpha=alpha,
        beta=beta,
        transition_counts={k: dict(v) for k, v in transitions.items()},
        emission_counts={k: dict(v) for k, v in emissions.items()},
    )


def hmm_disambiguate(model: HmmModel, lattice: CandidateLattice) -> DisambiguationResult:
    """Viterbi decoding over per-token candidate rule states, in log space.

    Per-token scores are the path's log transition+emission contributions,
    so total_score is the path log-probability.  Score ties at a cell or at
    the final state go to the lexicographically smaller rule string.
    """
    sets = lattice.sets
    if not sets:
        return DisambiguationResult(())
    keys = [editscript.scalar_lower(t.form) for t in lattice.sentence.tokens]

    def edge(prev_rule: str, cand: Candidate, t: int) -> float:
        return math.log(model.transition_prob(prev_rule, cand.rule)) + math.log(
            model.emission_prob(keys[t], cand.rule)
        )

    scores = [edge(BOS, cand, 0) for cand in sets[0].candidates]
    backpointers: list[list[int]] = []
    for t in range(1, len(sets)):
        new_scores = []
        back = []
        for cand in sets[t].candidates:
            best = None
            best_j = 0
            for j, prev_cand in enumerate(sets[t - 1].candidates):
                s = scores[j] + edge(prev_cand.rule, cand, t)
                if best is None or s > best:
                    best, best_j = s, j
            new_scores.append(best)
            back.append(best_j)
        scores = new_scores
        backpointers.append(back)

    best_i = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best_i]:
            best_i = i
    path = [best_i]
    for back in reversed(backpointers):
        path.append(back[path[-1]])
    path.reverse()

    choices = []
    prev_rule = BOS
    for t, i in enumerate(path):
        cand = sets[t].candidates[i]
        choices.append(TokenChoice(cand.rule, cand.lemma, edge(prev_rule, cand, t)))
        prev_rule = cand.rule
    return DisambiguationResult(tuple(choices))


# --------------------------------------------------------------------------
# Span-label matching
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpanMatcherConfig:
    threshold: float = 0.5  # decoding threshold tau; score >= tau selects the argmax
    dim: int = 256  # embedding dimension of the reference backend
    window: int = 2  # context window (tokens each side)
    scale: float = 5.0  # logistic scale applied to the dot product

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidInputError("threshold must be in [0, 1]")
        if self.dim < 1:
            raise InvalidInputError("dim must be >= 1")
        if self.window < 0:
            raise InvalidInputError("window must be >= 0")


class SpanScorer(Protocol):
    """Scores every span against every label, values in [0, 1]."""

    def __call__(
        self,
        tokens: Sequence[str],
        spans: Sequence[tuple[int, int]],
        labels: Sequence[str],
    ) -> Sequence[Sequence[float]]: ...


def _validate_matrix(
    matrix: Sequence[Sequence[float]], n_spans: int, n_labels: int
) -> None:
    if len(matrix) != n_spans:
        raise ScoreMatrixError(f"expected {n_spans} score rows, got {len(matrix)}")
    for row in matrix:
        if len(row) != n_labels:
            raise ScoreMatrixError(f"expected {n_labels} score columns, got {len(row)}")
        for value in row:
            if not (0.0 <= value <= 1.0) or value != value:
                raise ScoreMatrixError(f"score {value!r} outside [0, 1]")


def span_match_disambiguate(
    lattice: CandidateLattice,
    scorer: SpanScorer,
    config: SpanMatcherConfig = SpanMatcherConfig(),
    on_scorer_error: str = "fail",
) -> DisambiguationResult:
    """Thresholded argmax over each token's candidate rules.

    The scorer is asked once per sentence for the union of non-do-nothing
    candidate rules; per token only that token's candidates compete.  A max
    score >= threshold selects the argmax rule (ties to the smaller rule
    string), anything else falls back to do-nothing with score 1 - max.
    With on_scorer_error="do-nothing" a failing scorer yields an
    all-do-nothing sentence instead of propagating.
    """
    if on_scorer_error not in ("fail", "do-nothing"):
        raise InvalidInputError(f"bad on_scorer_error {on_scorer_error!r}")
    tokens = [t.form for t in lattice.sentence.tokens]
    labels = sorted(
        {rule for cand_set in lattice.sets for rule in cand_set.rules if rule != DO_NOTHING_RULE}
    )
    matrix: Sequence[Sequence[float]] | None = None
    if labels and tokens:
        spans = [(i, i) for i in range(len(tokens))]
        try:
            matrix = scorer(tokens, spans, labels)
            _validate_matrix(matrix, len(spans), len(labels))
        except (LemirError, OSError) as exc:
            if on_scorer_error == "fail":
                raise ScorerInvocationError(
                    f"scorer failed on sentence {lattice.sentence.sentence_id!r} "
                    f"({len(tokens)} tokens): {exc}"
                ) from exc
            matrix = None

    label_index = {label: j for j, label in enumerate(labels)}
    choices = []
    for i, cand_set in enumerate(lattice.sets):
        best = None
        best_score = 0.0
        if matrix is not None:
            for c in cand_set.candidates:  # sorted: argmax ties go to the smaller rule
                j = label_index.get(c.rule)
                if j is None:
                    continue
                score = matrix[i][j]
                if best is None or score > best_score:
                    best, best_score = c, score
        if best is not None and best_score >= config.threshold:
            choices.append(TokenChoice(best.rule, best.lemma, best_score))
        else:
            choices.append(_do_nothing_choice(cand_set, 1.0 - best_score))
    return DisambiguationResult(tuple(choices))


# --------------------------------------------------------------------------
# Reference scorer backend: signed feature hashing + logistic similarity
# --------------------------------------------------------------------------

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _hash_feature(vec: list[float], feature: str, dim: int) -> None:
    h = _fnv1a64(feature.encode("utf-8"))
    sign = 1.0 if (h >> 63) == 0 else -1.0
    vec[h % dim] += sign


def _char_grams(text: str) -> list[str]:
    grams = []
    for n in range(1, 5):
        for i in range(len(text) - n + 1):
            grams.append(text[i : i + n])
    return grams


def _l2_normalize(vec: list[float]) -> list[float]:
    norm = math.sqrt(sum(v * v for v in vec))
    if norm == 0.0:
        return vec
    return [v / norm for v in vec]


def reference_embed_spans(forms: Sequence[str], dim: int, window: int) -> list[list[float]]:
    """One L2-normalized hashed-feature vector per token.

    Features: character 1-4 grams of the boundary-marked token plus
    neighbor forms at offsets -window..window tagged by offset.
    """
    vectors = []
    for i, form in enumerate(forms):
        vec = [0.0] * dim
        for gram in _char_grams("^" + form + "$"):
            _hash_feature(vec, "g:" + gram, dim)
        for offset in range(-window, window + 1):
            if offset == 0:
                continue
            j = i + offset
            if 0 <= j < len(forms):
                _hash_feature(vec, f"c{offset}:{forms[j]}", dim)
        vectors.append(_l2_normalize(vec))
    return vectors


def reference_embed_labels(labels: Sequence[str], dim: int) -> list[list[float]]:
    """One L2-normalized hashed-feature vector per label string.

    Features: character 1-4 grams of the label plus, when the label parses
    as a canonical rule, the words of its verbalization.
    """
    from .corpus_io import tokenize
    from .errors import RuleParseError

    vectors = []
    for label in labels:
        vec = [0.0] * dim
        for gram in _char_grams(label):
            _hash_feature(vec, "g:" + gram, dim)
        try:
            description = editscript.verbalize_rule(editscript.parse_rule(label))
        except RuleParseError:
            description = None
        if description is not None:
            for span in tokenize(description):
                _hash_feature(vec, "v:" + span.form, dim)
        vectors.append(_l2_normalize(vec))
    return vectors


def reference_score(span_vec: Sequence[float], label_vec: Sequence[float], scale: float) -> float:
    dot = 0.0
    for a, b in zip(span_vec, label_vec):
        dot += a * b
    return 1.0 / (1.0 + math.exp(-scale * dot))


class ReferenceSpanScorer:
    """Deterministic in-process scorer; no accuracy claim attached."""

    def __init__(self, config: SpanMatcherConfig = SpanMatcherConfig()):
        self.config = config

    def __call__(
        self,
        tokens: Sequence[str],
        spans: Sequence[tuple[int, int]],
        labels: Sequence[str],
    ) -> list[list[float]]:
        cfg = self.config
        for start, end in spans:
            if not (0 <= start <= end < len(tokens)):
                raise InvalidInputError(f"span ({start}, {end}) outside token range")
        # multi-token spans embed as one joined pseudo-token with the span's context
        span_forms = [
            " ".join(tokens[start : end + 1]) for start, end in spans
        ]
        token_vecs = reference_embed_spans(list(tokens), cfg.dim, cfg.window)
        span_vecs = []
        for (start, end), form in zip(spans, span_forms):
            if start == end:
                span_vecs.append(token_vecs[start])
            else:
                merged = reference_embed_spans(
                    list(tokens[:start]) + [form] + list(tokens[end + 1 :]), cfg.dim, cfg.window
                )
                span_vecs.append(merged[start])
        label_vecs = reference_embed_labels(list(labels), cfg.dim)
        return [
            [reference_score(sv, lv, cfg.scale) for lv in label_vecs] for sv in span_vecs
        ]
