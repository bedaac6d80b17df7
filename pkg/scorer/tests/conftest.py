import json
import subprocess
import sys
from importlib import resources

import pytest

from neural_scorer.model import SpanLabelModel

SERVE_ARGV = [sys.executable, "-m", "neural_scorer.cli", "serve"]


def golden_root():
    # conformance kit shipped as package data by the lemmatizer toolkit
    return resources.files("lemir") / "golden" / "scorer_protocol"


@pytest.fixture(scope="session")
def golden_manifest():
    return json.loads((golden_root() / "manifest.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def golden_requests():
    text = (golden_root() / "requests.ndjson").read_text(encoding="utf-8")
    return text.splitlines()


@pytest.fixture(scope="session")
def golden_handshake():
    return (golden_root() / "handshake.txt").read_text(encoding="utf-8").rstrip("\n")


@pytest.fixture(scope="session")
def model():
    return SpanLabelModel.init(dim=32, scale=4.0, seed=5)


@pytest.fixture(scope="session")
def model_path(model, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.json"
    model.save(path)
    return str(path)


def run_server(input_lines, *argv, timeout=60):
    """Feed lines to a serve subprocess, return (stdout lines, exit code)."""
    proc = subprocess.Popen(
        list(argv),
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    out, err = proc.communicate("".join(f"{line}\n" for line in input_lines), timeout=timeout)
    return out.splitlines(), proc.returncode, err
