"""Input packing and feature hashing for the span-label encoder.

A request is packed into one symbol sequence: every label is preceded by
an [ENT] marker, a single [SEP] closes the label block, then the sentence
tokens follow.  Label text is the label string itself with a plain-words
reading appended when the label parses as a transformation rule, so the
encoder sees both the exact rule and natural-language signal.

Symbols are embedded by signed feature hashing over character 1-4 grams;
hashing is stateless and deterministic, so identical requests always
produce identical inputs.
"""

from __future__ import annotations

import hashlib

import numpy as np

ENT = "[ENT]"
SEP = "[SEP]"

NGRAM_MAX = 4


def pack(label_texts, tokens):
    """Symbol sequence plus the positions spans and labels resolve to."""
    symbols = []
    ent_positions = []
    for text in label_texts:
        ent_positions.append(len(symbols))
        symbols.append(ENT)
        symbols.append(text)
    symbols.append(SEP)
    token_offset = len(symbols)
    symbols.extend(tokens)
    return symbols, ent_positions, token_offset


def _grams(text: str):
    marked = f"^{text}$"
    for n in range(1, NGRAM_MAX + 1):
        for i in range(len(marked) - n + 1):
            yield marked[i : i + n]


def hash_embed(text: str, dim: int) -> np.ndarray:
    """Signed hashed n-gram vector, L2-normalized; zero for empty text."""
    vec = np.zeros(dim, dtype=np.float64)
    for gram in _grams(text):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if h & 1 == 0 else -1.0
        vec[(h >> 1) % dim] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def embed_sequence(symbols, dim: int) -> np.ndarray:
    return np.stack([hash_embed(s, dim) for s in symbols]) if symbols else np.zeros((0, dim))


# ---------------------------------------------------------------------------
# label verbalization
# ---------------------------------------------------------------------------

def _describe_ops(ops: str, where: str):
    parts = []
    i = 0
    removed = 0
    while i < len(ops):
        if ops[i] == "-":
            removed += 1
            i += 1
            continue
        if ops[i] == "+" and i + 1 < len(ops):
            if removed:
                parts.append(f"remove the {removed} {where} letter(s)")
                removed = 0
            parts.append(f"add '{ops[i + 1]}' at the {where}")
            i += 2
            continue
        raise ValueError(f"bad op at {i}")
    if removed:
        parts.append(f"remove the {removed} {where} letter(s)")
    return parts


def verbalize_label(label: str) -> str:
    """The label plus a plain-words reading when it parses as a rule.

    Labels that do not look like transformation rules are used verbatim;
    the encoder must accept arbitrary label strings.
    """
    sections = label.split("|")
    if len(sections) != 3 or not (
        sections[0].startswith("U")
        and sections[1].startswith("P")
        and sections[2].startswith("S")
    ):
        return label
    try:
        parts = []
        for span in filter(None, sections[0][1:].split(",")):
            start_text, length_text = span.split(":")
            start, length = int(start_text), int(length_text)
            parts.append(f"upper case letters {start}..{start + length}")
        parts.extend(_describe_ops(sections[1][1:], "first"))
        parts.extend(_describe_ops(sections[2][1:], "last"))
    except ValueError:
        return label
    if not parts:
        parts = ["do nothing"]
    return f"{label} : " + "; ".join(parts)
