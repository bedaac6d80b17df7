"""Span-label scoring model.

A small feed-forward encoder over hashed symbol embeddings.  Each packed
position is contextualized with the mean of its immediate neighbors, then
projected through a tanh layer.  A span is represented by the projected
start and end token states, a label by its [ENT] marker state, and the
score is a scaled sigmoid of their dot product, so every score lands in
(0, 1).

Checkpoints are plain JSON; floats survive the round trip bitwise because
they are serialized via repr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .encoding import embed_sequence, pack, verbalize_label
from .errors import ModelError

FORMAT_NAME = "neural-scorer-model"
FORMAT_VERSION = 1

PARAM_SHAPES = {
    "w1": ("dim", "dim"),
    "w2": ("dim", "dim"),
    "b1": ("dim",),
    "ws": ("dim", "dim2"),
    "bs": ("dim",),
    "wl": ("dim", "dim"),
    "bl": ("dim",),
}


def _sigmoid(z: float) -> float:
    # split on sign so exp never overflows
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@dataclass
class EncodeCache:
    """Intermediate encoder states kept around for backprop."""

    symbols: list
    ent_positions: list
    token_offset: int
    v: np.ndarray
    n: np.ndarray
    h: np.ndarray


@dataclass
class SpanLabelModel:
    dim: int
    scale: float
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, dim: int = 64, scale: float = 4.0, seed: int = 0) -> "SpanLabelModel":
        rng = np.random.default_rng(seed)
        std = 1.0 / np.sqrt(dim)
        params = {}
        for name, shape_spec in PARAM_SHAPES.items():
            shape = tuple(dim * 2 if s == "dim2" else dim for s in shape_spec)
            if name.startswith("b"):
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.normal(0.0, std, size=shape)
        return cls(dim=dim, scale=scale, params=params)

    # -- forward -----------------------------------------------------------

    def encode(self, label_texts, tokens) -> EncodeCache:
        symbols, ent_positions, token_offset = pack(label_texts, tokens)
        v = embed_sequence(symbols, self.dim)
        n = np.zeros_like(v)
        if len(symbols) > 1:
            n[1:] += v[:-1]
            n[:-1] += v[1:]
        n *= 0.5
        u = v @ self.params["w1"].T + n @ self.params["w2"].T + self.params["b1"]
        return EncodeCache(symbols, ent_positions, token_offset, v, n, np.tanh(u))

    def span_state(self, cache: EncodeCache, start: int, end: int):
        pa = cache.token_offset + start
        pb = cache.token_offset + end
        x = np.concatenate([cache.h[pa], cache.h[pb]])
        s = np.tanh(self.params["ws"] @ x + self.params["bs"])
        return s, x, pa, pb

    def label_state(self, cache: EncodeCache, j: int):
        pos = cache.ent_positions[j]
        l = np.tanh(self.params["wl"] @ cache.h[pos] + self.params["bl"])
        return l, pos

    def score_matrix(self, tokens, spans, labels) -> list:
        """Scores as a len(spans) x len(labels) list-of-lists in (0, 1)."""
        if not spans or not labels:
            return [[] for _ in spans]
        label_texts = [verbalize_label(lab) for lab in labels]
        cache = self.encode(label_texts, tokens)
        label_states = [self.label_state(cache, j)[0] for j in range(len(labels))]
        rows = []
        for start, end in spans:
            s = self.span_state(cache, start, end)[0]
            rows.append([_sigmoid(self.scale * float(s @ l)) for l in label_states])
        return rows

    def packed_length(self, n_labels: int, n_tokens: int) -> int:
        return 2 * n_labels + 1 + n_tokens

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": {"dim": self.dim, "scale": self.scale},
            "params": {k: v.tolist() for k, v in self.params.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SpanLabelModel":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise ModelError(f"cannot read model file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ModelError(f"model file is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("format") != FORMAT_NAME:
            raise ModelError("not a scorer model file")
        if payload.get("version") != FORMAT_VERSION:
            raise ModelError(f"unsupported model version: {payload.get('version')!r}")
        config = payload.get("config", {})
        dim = config.get("dim")
        scale = config.get("scale")
        if not isinstance(dim, int) or dim <= 0 or not isinstance(scale, (int, float)):
            raise ModelError("model config is malformed")
        params = {}
        raw = payload.get("params", {})
        for name, shape_spec in PARAM_SHAPES.items():
            if name not in raw:
                raise ModelError(f"model is missing parameter {name!r}")
            arr = np.asarray(raw[name], dtype=np.float64)
            shape = tuple(dim * 2 if s == "dim2" else dim for s in shape_spec)
            if arr.shape != shape:
                raise ModelError(f"parameter {name!r} has shape {arr.shape}, want {shape}")
            params[name] = arr
        return cls(dim=dim, scale=float(scale), params=params)
