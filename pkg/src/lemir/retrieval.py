"""Inverted index with BM25 scoring and top-k search.

Documents pass through a normalization pipeline (identity, suffix stemmer,
or lemmatizer) before indexing; queries must use the same pipeline.  The
IDF is the Lucene variant ln(1 + (N - df + 0.5) / (df + 0.5)), which is
non-negative for every df <= N.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import editscript
from .candidates import DictionaryGenerator
from .corpus_io import Document, tokenize
from .errors import CorpusFormatError, InvalidInputError
from .lemeval import Disambiguator, lemmatize_text

__all__ = [
    "NormalizationPipeline",
    "identity_pipeline",
    "stemmer_pipeline",
    "lemmatizer_pipeline",
    "RetrievalIndex",
    "build_index",
    "bm25_score",
    "search",
    "save_index",
    "load_index",
]

INDEX_FORMAT = "lemir-index"
INDEX_VERSION = 1

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
MIN_STEM_LENGTH = 3


@dataclass(frozen=True)
class NormalizationPipeline:
    """Deterministic text-to-tokens normalizer.

    kind "identity" lowercases tokens; "stemmer" additionally strips the
    longest matching suffix once, keeping stems of at least min_stem
    characters; "lemmatizer" runs the full lemmatization pipeline and
    lowercases the lemmas.
    """

    kind: str
    suffixes: tuple[str, ...] = ()
    min_stem: int = MIN_STEM_LENGTH
    generator: DictionaryGenerator | None = None
    disambiguate: Disambiguator | None = None
    model_path: str | None = None  # recorded in the index so search can reload

    def __post_init__(self):
        if self.kind not in ("identity", "stemmer", "lemmatizer"):
            raise InvalidInputError(f"unknown pipeline kind {self.kind!r}")
        if self.kind == "lemmatizer" and (self.generator is None or self.disambiguate is None):
            raise InvalidInputError("lemmatizer pipeline needs a generator and a disambiguator")
        if self.min_stem < 1:
            raise InvalidInputError("min_stem must be >= 1")

    def normalize(self, text: str) -> list[str]:
        if self.kind == "lemmatizer":
            pairs = lemmatize_text(text, self.generator, self.disambiguate)
            return [editscript.scalar_lower(lemma) for _, lemma in pairs]
        tokens = [editscript.scalar_lower(span.form) for span in tokenize(text)]
        if self.kind == "identity":
            return tokens
        return [self._stem(tok) for tok in tokens]

    def _stem(self, token: str) -> str:
        # longest matching suffix wins; strip at most one
        best = ""
        for suffix in self.suffixes:
            if (
                len(suffix) > len(best)
                and token.endswith(suffix)
                and len(token) - len(suffix) >= self.min_stem
            ):
                best = suffix
        return token[: len(token) - len(best)] if best else token

    def meta(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "stemmer":
            out["suffixes"] = list(self.suffixes)
            out["min_stem"] = self.min_stem
        if self.kind == "lemmatizer":
            out["model"] = self.model_path
        return out


def identity_pipeline() -> NormalizationPipeline:
    return NormalizationPipeline("identity")


def stemmer_pipeline(
    suffixes: Sequence[str], min_stem: int = MIN_STEM_LENGTH
) -> NormalizationPipeline:
    return NormalizationPipeline("stemmer", suffixes=tuple(suffixes), min_stem=min_stem)


def lemmatizer_pipeline(
    generator: DictionaryGenerator,
    disambiguate: Disambiguator,
    model_path: str | None = None,
) -> NormalizationPipeline:
    return NormalizationPipeline(
        "lemmatizer", generator=generator, disambiguate=disambiguate, model_path=model_path
    )


@dataclass
class RetrievalIndex:
    postings: dict[str, list[tuple[int, int]]]  # term -> [(internal id, tf)], id ascending
    doc_lengths: list[int]
    doc_ids: list[str]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    pipeline_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_ids:
            raise InvalidInputError("index must contain at least one document")
        if len(self.doc_ids) != len(self.doc_lengths):
            raise InvalidInputError("doc_ids and doc_lengths lengths differ")
        if self.k1 <= 0:
            raise InvalidInputError("k1 must be > 0")
        if not 0.0 <= self.b <= 1.0:
            raise InvalidInputError("b must be in [0, 1]")

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_lengths) / len(self.doc_lengths)

    def length_norm(self, internal_id: int) -> float:
        dl = self.doc_lengths[internal_id]
        return self.k1 * (1.0 - self.b + self.b * dl / self.avgdl)

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def _count_shard(
    documents: Sequence[Document], pipeline: NormalizationPipeline, offset: int
) -> tuple[dict[str, list[tuple[int, int]]], list[int]]:
    postings: dict[str, list[tuple[int, int]]] = {}
    lengths = []
    for i, doc in enumerate(documents):
        tokens = pipeline.normalize(doc.title + " " + doc.text)
        lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for tok in tokens:
            counts[tok] = counts.get(tok, 0) + 1
        for term in sorted(counts):
            postings.setdefault(term, []).append((offset + i, counts[term]))
    return postings, lengths


def build_index(
    documents: Sequence[Document],
    pipeline: NormalizationPipeline,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    jobs: int = 1,
) -> RetrievalIndex:
    """Index every document's title + " " + text.

    Sharded builds merge in document order, so the result is identical for
    any job count.
    """
    documents = list(documents)
    if not documents:
        raise InvalidInputError("cannot build an index over an empty corpus")
    seen = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise CorpusFormatError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)

    jobs = max(1, min(jobs, len(documents)))
    if jobs == 1:
        shards = [_count_shard(documents, pipeline, 0)]
    else:
        from concurrent.futures import ThreadPoolExecutor

        step = math.ceil(len(documents) / jobs)
        ranges = [(start, min(start + step, len(documents))) for start in range(0, len(documents), step)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            shards = list(
                pool.map(lambda r: _count_shard(documents[r[0] : r[1]], pipeline, r[0]), ranges)
            )

    postings: dict[str, list[tuple[int, int]]] = {}
    lengths: list[int] = []
    for shard_postings, shard_lengths in shards:
        for term, plist in shard_postings.items():
            postings.setdefault(term, []).extend(plist)
        lengths.extend(shard_lengths)
    # deterministic term order regardless of shard arrival
    postings = {term: postings[term] for term in sorted(postings)}
    return RetrievalIndex(
        postings=postings,
        doc_lengths=lengths,
        doc_ids=[doc.doc_id for doc in documents],
        k1=k1,
        b=b,
        pipeline_meta=pipeline.meta(),
    )


def _unique_qtf(query_tokens: Sequence[str]) -> list[tuple[str, int]]:
    """Unique query terms with counts, in first-occurrence order."""
    order: list[str] = []
    counts: dict[str, int] = {}
    for tok in query_tokens:
        if tok not in counts:
            order.append(tok)
            counts[tok] = 0
        counts[tok] += 1
    return [(term, counts[term]) for term in order]


def _term_contribution(index: RetrievalIndex, qtf: int, idf: float, tf: int, internal_id: int) -> float:
    return qtf * idf * (tf * (index.k1 + 1.0)) / (tf + index.length_norm(internal_id))


def bm25_score(index: RetrievalIndex, query_tokens: Sequence[str], internal_id: int) -> float:
    """Score one document; terms absent from the index contribute 0."""
    score = 0.0
    for term, qtf in _unique_qtf(query_tokens):
        plist = index.postings.get(term)
        if not plist:
            continue
        tf = 0
        for doc, doc_tf in plist:
            if doc == internal_id:
                tf = doc_tf
                break
        if tf == 0:
            continue
        score += _term_contribution(index, qtf, index.idf(term), tf, internal_id)
    return score


def search(
    index: RetrievalIndex, query_tokens: Sequence[str], k: int = 100
) -> list[tuple[str, float]]:
    """Top-k (doc_id, score), score descending, ties by doc_id ascending.

    Documents scoring zero are excluded, so fewer than k results can come
    back.  Accumulation order per document matches bm25_score exactly.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    accumulator: dict[int, float] = {}
    for term, qtf in _unique_qtf(query_tokens):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for internal_id, tf in plist:
            accumulator[internal_id] = accumulator.get(internal_id, 0.0) + _term_contribution(
                index, qtf, idf, tf, internal_id
            )
    scored = [
        (index.doc_ids[internal_id], score)
        for internal_id, score in accumulator.items()
        if score > 0.0
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]


def save_index(index: RetrievalIndex, path: str) -> None:
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k1": index.k1,
        "b": index.b,
        "pipeline": index.pipeline_meta,
        "doc_ids": index.doc_ids,
        "doc_lengths": index.doc_lengths,
        "postings": {term: [[d, tf] for d, tf in plist] for term, plist in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, sort_keys=True)
        handle.write("\n")


def load_index(path: str) -> RetrievalIndex:
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except ValueError as exc:
            raise CorpusFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != INDEX_FORMAT:
        raise CorpusFormatError(f"{path}: not a {INDEX_FORMAT} file")
    if payload.get("version") != INDEX_VERSION:
        raise CorpusFormatError(
            f"{path}: unsupported index version {payload.get('version')!r}"
        )
    try:
        return RetrievalIndex(
            postings={
                term: [(int(d), int(tf)) for d, tf in plist]
                for term, plist in payload["postings"].items()
            },
            doc_lengths=[int(v) for v in payload["doc_lengths"]],
            doc_ids=[str(v) for v in payload["doc_ids"]],
            k1=float(payload["k1"]),
            b=float(payload["b"]),
            pipeline_meta=dict(payload.get("pipeline", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"{path}: bad index contents: {exc}") from exc
