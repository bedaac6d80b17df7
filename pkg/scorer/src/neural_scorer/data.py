"""Training data preparation.

Examples are built from the lemmatizer toolkit's own rule extraction: the
`lemir rules roundtrip --details` report assigns every token its gold
transformation rule, and tokens whose rule actually changes the form
become positive (span, label) pairs.  The toolkit is consumed strictly as
a subprocess; nothing here imports it.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass

from .errors import DataError

DO_NOTHING = "U|P|S"


@dataclass
class TrainingExample:
    tokens: list
    # (start, end, label) with end inclusive, matching the wire format
    positives: list


def _group_rows(rows):
    sentences = []
    current_id = None
    current = []
    for sentence_id, form, rule in rows:
        if sentence_id != current_id and current:
            sentences.append(current)
            current = []
        current_id = sentence_id
        current.append((form, rule))
    if current:
        sentences.append(current)
    return sentences


def examples_from_details(text: str):
    """Parse the per-token TSV report into training examples."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise DataError(f"details line {lineno}: want 6 columns, got {len(fields)}")
        sentence_id, _, form, _, rule, _ = fields
        rows.append((sentence_id, form, rule))
    examples = []
    for sentence in _group_rows(rows):
        tokens = [form for form, _ in sentence]
        positives = [
            (i, i, rule) for i, (_, rule) in enumerate(sentence) if rule != DO_NOTHING
        ]
        examples.append(TrainingExample(tokens=tokens, positives=positives))
    return examples


def prepare_training_data(input_path, lemir_cmd: str = "lemir"):
    """Run the toolkit's roundtrip report over a treebank and parse it."""
    argv = shlex.split(lemir_cmd) + [
        "rules",
        "roundtrip",
        "--input",
        str(input_path),
        "--details",
        "--output",
        "-",
    ]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, check=False)
    except OSError as exc:
        raise DataError(f"cannot run {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        detail = proc.stderr.strip().splitlines()
        tail = detail[-1] if detail else "no diagnostics"
        raise DataError(f"{argv[0]} exited with {proc.returncode}: {tail}")
    return examples_from_details(proc.stdout)


def save_examples(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            record = {
                "tokens": example.tokens,
                "positives": [list(p) for p in example.positives],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_examples(path):
    examples = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read examples: {exc}") from exc
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"examples line {lineno}: {exc}") from exc
        if not isinstance(record, dict) or "tokens" not in record:
            raise DataError(f"examples line {lineno}: malformed record")
        positives = [tuple(p) for p in record.get("positives", [])]
        if any(len(p) != 3 for p in positives):
            raise DataError(f"examples line {lineno}: malformed span entry")
        examples.append(TrainingExample(tokens=list(record["tokens"]), positives=positives))
    return examples
