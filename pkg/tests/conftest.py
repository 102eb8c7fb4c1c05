import json
from pathlib import Path

import pytest

from mnlu.core import NluInstance
from mnlu.mockserver import MockChatServer

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_NAMES = ("ner", "eac", "dc", "re", "nli", "sts")


def load_golden(name):
    data = json.loads((FIXTURES / "golden" / f"{name}.json").read_text(encoding="utf-8"))
    return NluInstance.from_dict(data["instance"]), data["input"], data["output"]


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def mock_server():
    with MockChatServer() as server:
        yield server


def load_mixed():
    from mnlu.core import load_instances

    return load_instances(FIXTURES / "mixed30.jsonl")


def gold_responder(instances, opts=None, fewshot=None):
    """Mock responder that answers each prompt with its instance's rendered gold output."""
    from mnlu.client import build_prompt
    from mnlu.prompts import RenderOptions, render

    opts = opts or RenderOptions()
    answers = {build_prompt(i, opts, fewshot): render(i, opts).output for i in instances}
    return lambda prompt, body: answers[prompt]
