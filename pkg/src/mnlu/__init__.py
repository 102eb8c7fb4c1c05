"""Unified prompting format, corpus builder, scoring and merging for medical NLU."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    ChoiceOption,
    ChoiceSet,
    EntityMention,
    NluInstance,
    OutputCategory,
    PromptPair,
    TaskKind,
    ValidationError,
    load_instances,
)
from .parse import parse_choice_output, parse_token_output  # noqa: E402
from .prompts import RenderOptions, render  # noqa: E402

__all__ = [
    "ChoiceOption",
    "ChoiceSet",
    "EntityMention",
    "NluInstance",
    "OutputCategory",
    "PromptPair",
    "RenderOptions",
    "TaskKind",
    "ValidationError",
    "__version__",
    "load_instances",
    "parse_choice_output",
    "parse_token_output",
    "render",
]
