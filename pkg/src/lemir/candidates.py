"""Per-token lemma candidate generation and candidate lattices.

The dictionary generator plays the morphological analyzer's role: it
proposes every lemma analysis a token could have, leaving the choice to a
disambiguator.  Real analyzer output can be brought in through
import_candidates instead.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import editscript
from .corpus_io import Sentence, Token
from .errors import AlignmentError, CorpusFormatError, RuleIncompatibleError

__all__ = [
    "Candidate",
    "CandidateSet",
    "CandidateLattice",
    "DictionaryGenerator",
    "DO_NOTHING_RULE",
    "MAX_SUFFIX_LEN",
    "build_dictionary_generator",
    "generate_candidates",
    "import_candidates",
    "oracle_accuracy",
]

DO_NOTHING_RULE = editscript.format_rule(editscript.DO_NOTHING)

# Suffix backoff depth for unknown forms; longest matching suffix wins.
MAX_SUFFIX_LEN = 5


@dataclass(frozen=True)
class Candidate:
    lemma: str
    rule: str  # canonical rule string


@dataclass(frozen=True)
class CandidateSet:
    """Candidates for one token, deduplicated by rule string.

    The do-nothing analysis is always present, so the set is never empty.
    """

    token_index: int
    candidates: tuple[Candidate, ...]

    @staticmethod
    def build(token_index: int, form: str, candidates: Iterable[Candidate]) -> "CandidateSet":
        by_rule = {c.rule: c for c in candidates}
        if DO_NOTHING_RULE not in by_rule:
            fallback = editscript.apply_rule(form, editscript.DO_NOTHING)
            by_rule[DO_NOTHING_RULE] = Candidate(fallback, DO_NOTHING_RULE)
        ordered = tuple(sorted(by_rule.values(), key=lambda c: c.rule))
        return CandidateSet(token_index, ordered)

    @property
    def rules(self) -> list[str]:
        return [c.rule for c in self.candidates]

    @property
    def lemmas(self) -> list[str]:
        return [c.lemma for c in self.candidates]


@dataclass(frozen=True)
class CandidateLattice:
    sentence: Sentence
    sets: tuple[CandidateSet, ...]

    def __post_init__(self):
        if len(self.sets) != len(self.sentence.tokens):
            raise AlignmentError(
                f"{len(self.sets)} candidate sets for {len(self.sentence.tokens)} tokens"
            )


@dataclass(frozen=True)
class DictionaryGenerator:
    """Lemma proposals learned from a treebank.

    form_map: lowercased form -> sorted lemmas observed for it.
    suffix_map: form suffix (length 1..MAX_SUFFIX_LEN) -> rule string counts.
    """

    form_map: dict[str, tuple[str, ...]]
    suffix_map: dict[str, dict[str, int]]

    def to_dict(self) -> dict:
        return {
            "form_map": {form: list(lemmas) for form, lemmas in self.form_map.items()},
            "suffix_map": self.suffix_map,
        }

    @staticmethod
    def from_dict(obj: dict) -> "DictionaryGenerator":
        return DictionaryGenerator(
            form_map={form: tuple(lemmas) for form, lemmas in obj["form_map"].items()},
            suffix_map={suffix: dict(rules) for suffix, rules in obj["suffix_map"].items()},
        )


def build_dictionary_generator(train: Sequence[Sentence]) -> DictionaryGenerator:
    """Collect per-form lemmas and per-suffix rules from gold sentences."""
    form_lemmas: dict[str, set[str]] = {}
    suffix_rules: dict[str, Counter[str]] = {}
    for sentence in train:
        for token in sentence.tokens:
            if token.lemma is None:
                continue
            key = editscript.scalar_lower(token.form)
            form_lemmas.setdefault(key, set()).add(token.lemma)
            rule = editscript.format_rule(editscript.extract_rule(token.form, token.lemma))
            for length in range(1, min(MAX_SUFFIX_LEN, len(key)) + 1):
                suffix_rules.setdefault(key[-length:], Counter())[rule] += 1
    return DictionaryGenerator(
        form_map={form: tuple(sorted(lemmas)) for form, lemmas in form_lemmas.items()},
        suffix_map={suffix: dict(counts) for suffix, counts in suffix_rules.items()},
    )


def _candidates_for_form(gen: DictionaryGenerator, form: str) -> list[Candidate]:
    key = editscript.scalar_lower(form)
    lemmas = gen.form_map.get(key)
    found: list[Candidate] = []
    if lemmas is not None:
        for lemma in lemmas:
            rule = editscript.extract_rule(form, lemma)
            found.append(Candidate(lemma, editscript.format_rule(rule)))
        return found
    for length in range(min(MAX_SUFFIX_LEN, len(key)), 0, -1):
        rules = gen.suffix_map.get(key[-length:])
        if not rules:
            continue
        for rule_text in sorted(rules):
            try:
                lemma = editscript.apply_rule(form, editscript.parse_rule(rule_text))
            except RuleIncompatibleError:
                continue
            found.append(Candidate(lemma, rule_text))
        break  # longest matching suffix only
    return found


def generate_candidates(gen: DictionaryGenerator, sentence: Sentence) -> CandidateLattice:
    """Propose lemma candidates for every token of a sentence."""
    sets = tuple(
        CandidateSet.build(i, token.form, _candidates_for_form(gen, token.form))
        for i, token in enumerate(sentence.tokens)
    )
    return CandidateLattice(sentence, sets)


def import_candidates(
    stream: Iterable[str], reference: Sequence[Sentence] | None = None
) -> list[CandidateLattice]:
    """Read externally produced candidate lemmas from JSONL.

    Lines look like {"sentence_id":.., "tokens":[{"form":.., "lemmas":[..]},..]}.
    When reference sentences are given, token counts must line up and the
    lattices carry the reference tokens (with their gold lemmas).
    """
    lattices: list[CandidateLattice] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            sentence_id = str(obj.get("sentence_id", lineno))
            entries = [(str(t["form"]), [str(x) for x in t["lemmas"]]) for t in obj["tokens"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusFormatError(f"bad candidate line: {exc}", lineno) from exc
        index = len(lattices)
        if reference is not None:
            if index >= len(reference):
                raise AlignmentError(f"more candidate sentences than reference ({index + 1})")
            ref = reference[index]
            if len(ref.tokens) != len(entries):
                raise AlignmentError(
                    f"sentence {sentence_id!r}: {len(entries)} tokens vs "
                    f"{len(ref.tokens)} in reference"
                )
            sentence = ref
        else:
            sentence = Sentence(tuple(Token(form) for form, _ in entries), sentence_id)
        sets = []
        for i, (form, lemmas) in enumerate(entries):
            cands = [
                Candidate(lemma, editscript.format_rule(editscript.extract_rule(form, lemma)))
                for lemma in lemmas
            ]
            sets.append(CandidateSet.build(i, form, cands))
        lattices.append(CandidateLattice(sentence, tuple(sets)))
    if reference is not None and len(lattices) != len(reference):
        raise AlignmentError(f"{len(lattices)} candidate sentences vs {len(reference)} reference")
    return lattices


def oracle_accuracy(lattices: Sequence[CandidateLattice], gold: Sequence[Sentence]) -> float:
    """Fraction of tokens whose gold lemma appears among the candidates."""
    if len(lattices) != len(gold):
        raise AlignmentError(f"{len(lattices)} lattices vs {len(gold)} gold sentences")
    covered = 0
    total = 0
    for lattice, sentence in zip(lattices, gold):
        if len(lattice.sets) != len(sentence.tokens):
            raise AlignmentError(
                f"sentence {sentence.sentence_id!r}: {len(lattice.sets)} candidate sets vs "
                f"{len(sentence.tokens)} tokens"
            )
        for cand_set, token in zip(lattice.sets, sentence.tokens):
            total += 1
            if token.lemma is not None and token.lemma in cand_set.lemmas:
                covered += 1
    return covered / total if total else 0.0
