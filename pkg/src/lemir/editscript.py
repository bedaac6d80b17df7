"""Transformation rules mapping surface forms to lemmas.

A rule is a casing script plus two affix edit scripts anchored at the word
edges: the form is lowercased, characters are deleted/inserted at the start
and at the end, and finally ranges of the result are uppercased.  Rules are
affix-anchored, so the same rule string applies to any sufficiently long
form ("remove the last letter" works for "koera" and "metsa" alike).

Canonical string grammar (the label identity used everywhere downstream):

    U<start>:<len>[,<start>:<len>...]|P<ops>|S<ops>

where <ops> is a sequence of `-` (delete one character) and `+<char>`
(insert one character), deletes before inserts, and any section may be
empty.  The all-empty rule ``U|P|S`` maps a form to its lowercased self.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping

from .errors import InvalidInputError, RuleIncompatibleError, RuleParseError

__all__ = [
    "EditOp",
    "TransformationRule",
    "RuleStat",
    "DO_NOTHING",
    "DELETE_OP",
    "insert_op",
    "scalar_lower",
    "extract_rule",
    "apply_rule",
    "format_rule",
    "parse_rule",
    "verbalize_rule",
    "rule_frequency_table",
    "frequency_table_tsv",
]


@dataclass(frozen=True)
class EditOp:
    """A single edit: kind is "delete" or "insert"; ch present iff insert."""

    kind: str
    ch: str | None = None

    def __post_init__(self):
        if self.kind == "delete":
            if self.ch is not None:
                raise InvalidInputError("delete op carries no character")
        elif self.kind == "insert":
            if not isinstance(self.ch, str) or len(self.ch) != 1:
                raise InvalidInputError("insert op carries exactly one character")
        else:
            raise InvalidInputError(f"unknown op kind {self.kind!r}")


DELETE_OP = EditOp("delete")


def insert_op(ch: str) -> EditOp:
    return EditOp("insert", ch)


def _validate_ops(ops: tuple[EditOp, ...], section: str) -> None:
    seen_insert = False
    for op in ops:
        if op.kind == "insert":
            seen_insert = True
        elif seen_insert:
            raise InvalidInputError(f"{section} ops not canonical: delete after insert")


def _split_ops(ops: tuple[EditOp, ...]) -> tuple[int, str]:
    """Canonical ops -> (number of deletes, inserted characters)."""
    n_del = 0
    inserted = []
    for op in ops:
        if op.kind == "delete":
            n_del += 1
        else:
            inserted.append(op.ch)
    return n_del, "".join(inserted)


@dataclass(frozen=True)
class TransformationRule:
    """Casing ranges over the lemma plus edge edit scripts over the form.

    casing_ranges: (start, length) ranges of the output to uppercase, in
    ascending disjoint order; everything else stays lowercase.
    prefix_ops / suffix_ops: deletes followed by inserts, applied at the
    start / end of the lowercased form.
    """

    casing_ranges: tuple[tuple[int, int], ...] = ()
    prefix_ops: tuple[EditOp, ...] = ()
    suffix_ops: tuple[EditOp, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "casing_ranges", tuple(tuple(r) for r in self.casing_ranges))
        object.__setattr__(self, "prefix_ops", tuple(self.prefix_ops))
        object.__setattr__(self, "suffix_ops", tuple(self.suffix_ops))
        prev_end = -1
        for start, length in self.casing_ranges:
            if start < 0 or length < 1:
                raise InvalidInputError(f"bad casing range ({start}, {length})")
            if start <= prev_end:
                raise InvalidInputError("casing ranges must be disjoint and ascending")
            prev_end = start + length - 1
        _validate_ops(self.prefix_ops, "prefix")
        _validate_ops(self.suffix_ops, "suffix")

    @property
    def is_noop(self) -> bool:
        return not (self.casing_ranges or self.prefix_ops or self.suffix_ops)


DO_NOTHING = TransformationRule()


def _lower1(c: str) -> str:
    low = c.lower()
    return low if len(low) == 1 else c


def _upper1(c: str) -> str:
    up = c.upper()
    return up if len(up) == 1 else c


def scalar_lower(text: str) -> str:
    """Lowercase per Unicode scalar, only where uppercasing maps back exactly.

    Characters whose lowercase form is not a single scalar, or would not
    uppercase back to the original (ẞ, İ, titlecase digraphs), are kept
    verbatim.  This keeps indices stable and makes casing ranges lossless,
    which the extract/apply round trip relies on.
    """
    if text.isascii():
        return text.lower()
    out = []
    for c in text:
        low = _lower1(c)
        out.append(low if low != c and _upper1(low) == c else c)
    return "".join(out)


def _longest_common_substring(a: str, b: str) -> tuple[int, int, int]:
    """(start_a, start_b, length) of the longest common contiguous substring.

    Ties go to the earliest start in `a`, then the earliest in `b`;
    (0, 0, 0) when the strings share no character.
    """
    if a == b:
        return 0, 0, len(a)
    n = min(len(a), len(b))
    if a[:n] == b[:n]:
        return 0, 0, n
    b_positions: dict[str, list[int]] = {}
    for j, c in enumerate(b):
        b_positions.setdefault(c, []).append(j)
    best_len = 0
    best_a = best_b = 0
    prev: dict[int, int] = {}
    for i, c in enumerate(a):
        positions = b_positions.get(c)
        if not positions:
            prev = {}
            continue
        cur: dict[int, int] = {}
        for j in positions:
            length = prev.get(j - 1, 0) + 1
            cur[j] = length
            if length > best_len:
                best_len = length
                best_a = i - length + 1
                best_b = j - length + 1
        prev = cur
    return best_a, best_b, best_len


def extract_rule(form: str, lemma: str) -> TransformationRule:
    """Derive the transformation rule turning `form` into `lemma`.

    Deterministic; apply_rule(form, extract_rule(form, lemma)) == lemma for
    any pair of non-empty strings.
    """
    if not form or not lemma:
        raise InvalidInputError("form and lemma must be non-empty")
    form_low = scalar_lower(form)
    lemma_low = scalar_lower(lemma)

    f0, l0, size = _longest_common_substring(form_low, lemma_low)
    prefix_ops = [DELETE_OP] * f0 + [insert_op(c) for c in lemma_low[:l0]]
    suffix_ops = [DELETE_OP] * (len(form_low) - f0 - size) + [
        insert_op(c) for c in lemma_low[l0 + size:]
    ]

    ranges = []
    run_start = None
    for i in range(len(lemma)):
        if lemma[i] != lemma_low[i]:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            ranges.append((run_start, i - run_start))
            run_start = None
    if run_start is not None:
        ranges.append((run_start, len(lemma) - run_start))

    return TransformationRule(tuple(ranges), tuple(prefix_ops), tuple(suffix_ops))


def apply_rule(form: str, rule: TransformationRule) -> str:
    """Apply a rule to a surface form, producing the lemma."""
    if not form:
        raise InvalidInputError("form must be non-empty")
    s = scalar_lower(form)
    pre_del, pre_ins = _split_ops(rule.prefix_ops)
    suf_del, suf_ins = _split_ops(rule.suffix_ops)
    if pre_del + suf_del > len(s):
        raise RuleIncompatibleError(
            f"rule deletes {pre_del + suf_del} characters but form has {len(s)}"
        )
    result = pre_ins + s[pre_del: len(s) - suf_del] + suf_ins
    if rule.casing_ranges:
        chars = list(result)
        for start, length in rule.casing_ranges:
            if start + length > len(chars):
                raise RuleIncompatibleError(
                    f"casing range ({start}, {length}) beyond result of length {len(chars)}"
                )
            for k in range(start, start + length):
                chars[k] = _upper1(chars[k])
        result = "".join(chars)
    return result


def _format_ops(ops: tuple[EditOp, ...]) -> str:
    n_del, inserted = _split_ops(ops)
    return "-" * n_del + "".join("+" + c for c in inserted)


def format_rule(rule: TransformationRule) -> str:
    """Serialize to the canonical `U...|P...|S...` string."""
    u = ",".join(f"{start}:{length}" for start, length in rule.casing_ranges)
    return f"U{u}|P{_format_ops(rule.prefix_ops)}|S{_format_ops(rule.suffix_ops)}"


def _parse_int(text: str, i: int) -> tuple[int, int]:
    start = i
    while i < len(text) and text[i].isdigit():
        i += 1
    digits = text[start:i]
    if not digits:
        raise RuleParseError(f"expected a number at position {start} in {text!r}")
    if len(digits) > 1 and digits[0] == "0":
        raise RuleParseError(f"leading zeros at position {start} in {text!r}")
    return int(digits), i


def _parse_ops(text: str, i: int) -> tuple[list[EditOp], int]:
    ops: list[EditOp] = []
    seen_insert = False
    while i < len(text) and text[i] != "|":
        c = text[i]
        if c == "-":
            if seen_insert:
                raise RuleParseError(f"delete after insert at position {i} in {text!r}")
            ops.append(DELETE_OP)
            i += 1
        elif c == "+":
            if i + 1 >= len(text):
                raise RuleParseError(f"dangling '+' at position {i} in {text!r}")
            ops.append(insert_op(text[i + 1]))
            seen_insert = True
            i += 2
        else:
            raise RuleParseError(f"unexpected {c!r} at position {i} in {text!r}")
    return ops, i


def _expect(text: str, i: int, token: str) -> int:
    if not text.startswith(token, i):
        raise RuleParseError(f"expected {token!r} at position {i} in {text!r}")
    return i + len(token)


def parse_rule(text: str) -> TransformationRule:
    """Parse a canonical rule string; inverse of format_rule."""
    i = _expect(text, 0, "U")
    ranges: list[tuple[int, int]] = []
    while i < len(text) and text[i] != "|":
        if ranges:
            i = _expect(text, i, ",")
        start, i = _parse_int(text, i)
        i = _expect(text, i, ":")
        length, i = _parse_int(text, i)
        ranges.append((start, length))
    i = _expect(text, i, "|P")
    prefix_ops, i = _parse_ops(text, i)
    i = _expect(text, i, "|S")
    suffix_ops, i = _parse_ops(text, i)
    if i != len(text):
        raise RuleParseError(f"trailing characters at position {i} in {text!r}")
    try:
        return TransformationRule(tuple(ranges), tuple(prefix_ops), tuple(suffix_ops))
    except InvalidInputError as exc:
        raise RuleParseError(f"{exc} in {text!r}") from exc


def verbalize_rule(rule: TransformationRule) -> str:
    """Deterministic English description of a rule."""
    pre_del, pre_ins = _split_ops(rule.prefix_ops)
    suf_del, suf_ins = _split_ops(rule.suffix_ops)
    parts = []
    if pre_del:
        parts.append(f"remove the {pre_del} first letter(s)")
    if pre_ins:
        parts.append(f"prepend '{pre_ins}'")
    if suf_del:
        parts.append(f"remove the {suf_del} last letter(s)")
    if suf_ins:
        parts.append(f"append '{suf_ins}'")
    if rule.casing_ranges:
        spans = ", ".join(f"{start}..{start + length}" for start, length in rule.casing_ranges)
        parts.append(f"upper case letters {spans}")
    if not parts:
        return "do nothing"
    return "; ".join(parts)


@dataclass(frozen=True)
class RuleStat:
    count: int
    share: float


def rule_frequency_table(pairs: Iterable[tuple[str, str]]) -> dict[str, RuleStat]:
    """Count extracted rules over (form, lemma) pairs.

    Returned mapping is ordered by descending count, then rule string;
    shares sum to 1.0 over the counted pairs.
    """
    counts: Counter[str] = Counter()
    total = 0
    for form, lemma in pairs:
        try:
            rule = extract_rule(form, lemma)
        except InvalidInputError as exc:
            raise InvalidInputError(f"pair ({form!r}, {lemma!r}): {exc}") from exc
        counts[format_rule(rule)] += 1
        total += 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return {rule: RuleStat(count, count / total) for rule, count in ordered}


def frequency_table_tsv(table: Mapping[str, RuleStat]) -> str:
    """Render a frequency table as `rule<TAB>count<TAB>share` lines."""
    return "".join(f"{rule}\t{stat.count}\t{stat.share:.9f}\n" for rule, stat in table.items())
