"""Corpus readers and writers: CoNLL-U, JSONL documents, TREC qrels/runs.

Also home of the shared tokenizer used by every retrieval pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

from .errors import CorpusFormatError

__all__ = [
    "Token",
    "Sentence",
    "Document",
    "TokenSpan",
    "parse_conllu",
    "tokenize",
    "load_jsonl_corpus",
    "load_qrels",
    "load_run",
    "write_run",
]


@dataclass(frozen=True)
class Token:
    form: str
    lemma: str | None = None


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    sentence_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class TokenSpan:
    form: str
    start: int  # Unicode scalar offsets into the source text
    end: int


def parse_conllu(stream: Iterable[str]) -> list[Sentence]:
    """Read ID/FORM/LEMMA columns of a CoNLL-U stream.

    Sentences split on blank lines; multiword range lines ("3-4") and empty
    nodes ("3.1") are skipped; `# sent_id = X` comments set sentence_id,
    falling back to the 1-based sentence ordinal.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    sent_id: str | None = None

    def flush():
        nonlocal tokens, sent_id
        if tokens:
            sid = sent_id if sent_id is not None else str(len(sentences) + 1)
            sentences.append(Sentence(tuple(tokens), sid))
        tokens = []
        sent_id = None

    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line:
            flush()
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("sent_id") and "=" in comment:
                sent_id = comment.split("=", 1)[1].strip()
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise CorpusFormatError(
                f"expected at least 3 tab-separated fields, got {len(fields)}", lineno
            )
        token_id, form, lemma = fields[0], fields[1], fields[2]
        if "-" in token_id or "." in token_id:
            continue  # multiword range or empty node
        if not token_id.isdigit():
            raise CorpusFormatError(f"bad token id {token_id!r}", lineno)
        if not form:
            raise CorpusFormatError("empty FORM", lineno)
        sentence_lemma = None if lemma == "_" and form != "_" else lemma
        tokens.append(Token(form, sentence_lemma))
    flush()
    return sentences


def tokenize(text: str) -> list[TokenSpan]:
    """Split text into maximal letter/digit runs plus single-char symbols.

    Offsets index Unicode scalars; concatenating token slices with the gaps
    between them reconstructs the input exactly.
    """
    spans: list[TokenSpan] = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isalnum():
            j = i + 1
            while j < n and text[j].isalnum():
                j += 1
        else:
            j = i + 1
        spans.append(TokenSpan(text[i:j], i, j))
        i = j
    return spans


def load_jsonl_corpus(stream: Iterable[str]) -> Iterator[Document]:
    """Stream documents from JSONL lines {"doc_id":..,"title":..,"text":..}."""
    seen: set[str] = set()
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"bad JSON: {exc}", lineno) from exc
        try:
            doc = Document(str(obj["doc_id"]), str(obj["title"]), str(obj["text"]))
        except (KeyError, TypeError) as exc:
            raise CorpusFormatError(f"missing field {exc}", lineno) from exc
        if doc.doc_id in seen:
            raise CorpusFormatError(f"duplicate doc_id {doc.doc_id!r}", lineno)
        seen.add(doc.doc_id)
        yield doc


def load_qrels(stream: Iterable[str]) -> dict[tuple[str, str], int]:
    """Read TREC qrels lines `qid 0 docid grade`, grades restricted to 0/1/2."""
    qrels: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise CorpusFormatError(f"expected 4 fields, got {len(fields)}", lineno)
        qid, _, docid, grade_text = fields
        try:
            grade = int(grade_text)
        except ValueError as exc:
            raise CorpusFormatError(f"bad grade {grade_text!r}", lineno) from exc
        if grade not in (0, 1, 2):
            raise CorpusFormatError(f"grade {grade} outside {{0, 1, 2}}", lineno)
        qrels[(qid, docid)] = grade
    return qrels


def load_run(stream: Iterable[str]) -> dict[str, list[tuple[str, float]]]:
    """Read a TREC run file `qid Q0 docid rank score tag`.

    Validates per-query rank contiguity (1..n), non-increasing scores, and
    doc_id uniqueness.
    """
    run: dict[str, list[tuple[str, float]]] = {}
    seen_docs: dict[str, set[str]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise CorpusFormatError(f"expected 6 fields, got {len(fields)}", lineno)
        qid, _, docid, rank_text, score_text, _tag = fields
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError as exc:
            raise CorpusFormatError(f"bad rank/score: {exc}", lineno) from exc
        ranking = run.setdefault(qid, [])
        docs = seen_docs.setdefault(qid, set())
        if rank != len(ranking) + 1:
            raise CorpusFormatError(
                f"rank {rank} for query {qid!r} not contiguous (expected {len(ranking) + 1})",
                lineno,
            )
        if docid in docs:
            raise CorpusFormatError(f"duplicate doc_id {docid!r} for query {qid!r}", lineno)
        if ranking and score > ranking[-1][1]:
            raise CorpusFormatError(f"score {score} increases at rank {rank}", lineno)
        docs.add(docid)
        ranking.append((docid, score))
    return run


def write_run(run: dict[str, list[tuple[str, float]]], out: IO[str], tag: str = "lemir") -> None:
    """Write a run in TREC format with scores at 6 decimals."""
    for qid in run:
        for rank, (docid, score) in enumerate(run[qid], start=1):
            out.write(f"{qid} Q0 {docid} {rank} {score:.6f} {tag}\n")
