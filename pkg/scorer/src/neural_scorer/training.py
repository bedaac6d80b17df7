"""Training loop for the span-label model.

Binary cross entropy over (span, label) pairs.  Positive pairs come from
the prepared data; negatives pair each annotated span with the other
labels active in its sentence plus a sample of unannotated token spans.
Gradients are computed in closed form and applied with Adagrad after each
sentence; sentence order is reshuffled every epoch.
"""

from __future__ import annotations

import numpy as np

from .encoding import verbalize_label
from .model import SpanLabelModel


def _bce_with_logit(z: float, y: float) -> float:
    # max(z,0) - y*z + log1p(exp(-|z|)) is stable for any z
    return max(z, 0.0) - y * z + float(np.log1p(np.exp(-abs(z))))


def _pairs_for_example(example, rng, max_negatives: int):
    """(span, label_index, target) triples plus the sentence label list."""
    labels = sorted({label for _, _, label in example.positives})
    index = {label: j for j, label in enumerate(labels)}
    pairs = []
    positive_starts = set()
    for start, end, label in example.positives:
        pairs.append(((start, end), index[label], 1.0))
        positive_starts.add(start)
        others = [j for j in range(len(labels)) if j != index[label]]
        if len(others) > max_negatives:
            others = list(rng.choice(len(labels) - 1, size=max_negatives, replace=False))
            others = [j if j < index[label] else j + 1 for j in others]
        for j in others:
            pairs.append(((start, end), j, 0.0))
    unlabeled = [i for i in range(len(example.tokens)) if i not in positive_starts]
    if unlabeled:
        n_extra = min(len(example.positives), len(unlabeled))
        for i in rng.choice(len(unlabeled), size=n_extra, replace=False):
            token = unlabeled[int(i)]
            pairs.append(((token, token), int(rng.integers(len(labels))), 0.0))
    return labels, pairs


def sentence_loss_and_grads(model: SpanLabelModel, tokens, labels, pairs):
    """Mean BCE over the pairs and gradients for every parameter."""
    label_texts = [verbalize_label(lab) for lab in labels]
    cache = model.encode(label_texts, tokens)
    span_states = {}
    for span, _, _ in pairs:
        if span not in span_states:
            span_states[span] = model.span_state(cache, span[0], span[1])
    label_states = {j: model.label_state(cache, j) for _, j, _ in pairs}

    grads = {name: np.zeros_like(p) for name, p in model.params.items()}
    d_h = np.zeros_like(cache.h)
    total = 0.0
    dim = model.dim
    for span, j, y in pairs:
        s, x, pa, pb = span_states[span]
        l, pos = label_states[j]
        z = model.scale * float(s @ l)
        total += _bce_with_logit(z, y)
        dz = (1.0 / (1.0 + np.exp(-z)) - y) * model.scale
        dus = dz * l * (1.0 - s * s)
        grads["ws"] += np.outer(dus, x)
        grads["bs"] += dus
        dx = model.params["ws"].T @ dus
        d_h[pa] += dx[:dim]
        d_h[pb] += dx[dim:]
        dul = dz * s * (1.0 - l * l)
        grads["wl"] += np.outer(dul, cache.h[pos])
        grads["bl"] += dul
        d_h[pos] += model.params["wl"].T @ dul

    d_u = d_h * (1.0 - cache.h * cache.h)
    grads["w1"] += d_u.T @ cache.v
    grads["w2"] += d_u.T @ cache.n
    grads["b1"] += d_u.sum(axis=0)
    n = len(pairs)
    for g in grads.values():
        g /= n
    return total / n, grads


def train(
    model: SpanLabelModel,
    examples,
    epochs: int = 10,
    lr: float = 0.1,
    seed: int = 0,
    max_negatives: int = 4,
):
    """Fit in place; returns the mean loss per epoch."""
    rng = np.random.default_rng(seed)
    usable = [ex for ex in examples if ex.positives]
    # Adagrad's first step is +-lr per entry whatever the gradient is, so
    # lr must stay well under the init weight scale or tiny corpora saturate
    accum = {name: np.zeros_like(p) for name, p in model.params.items()}
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(usable))
        epoch_loss = 0.0
        for idx in order:
            example = usable[int(idx)]
            labels, pairs = _pairs_for_example(example, rng, max_negatives)
            loss, grads = sentence_loss_and_grads(model, example.tokens, labels, pairs)
            epoch_loss += loss
            for name, g in grads.items():
                accum[name] += g * g
                model.params[name] -= lr * g / (np.sqrt(accum[name]) + 1e-8)
        losses.append(epoch_loss / max(len(usable), 1))
    return losses
