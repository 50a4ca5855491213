"""Prompt template loading, slot substitution, and sequence serialization.

Templates live as plain-text files with ``{{slot}}`` markers. Rendering is
pure: the same binding always yields byte-identical text, and every slot
value appears verbatim in the output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

TEMPLATE_NAMES = (
    "summarize-short",
    "summarize-long",
    "recommend-category",
    "collaborate",
    "vote",
)

NO_HISTORY_FALLBACK = "The user has no prior items."

_SLOT_RE = re.compile(r"\{\{([a-zA-Z0-9_]+)\}\}")


class RenderError(Exception):
    """Missing or unresolved slots at render time."""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def required_slots(self) -> frozenset[str]:
        return frozenset(_SLOT_RE.findall(self.body))


def render(template: PromptTemplate, binding: Mapping[str, str]) -> str:
    missing = sorted(template.required_slots - set(binding))
    if missing:
        raise RenderError(
            f"template {template.name!r} missing slots: {', '.join(missing)}")
    text = _SLOT_RE.sub(lambda m: str(binding[m.group(1)]), template.body)
    leftover = _SLOT_RE.findall(text)
    if leftover:
        raise RenderError(
            f"unresolved slot markers after render: {', '.join(sorted(set(leftover)))}")
    return text


def normalize_title(title: str) -> str:
    """Trim and collapse internal whitespace (tabs/newlines become spaces)."""
    return " ".join(title.split())


def sequence_to_text(titles: Sequence[str]) -> str:
    """Chronological numbered list, one normalized title per line."""
    if not titles:
        raise ValueError("cannot serialize an empty sequence")
    return "\n".join(f"{i}. {normalize_title(t)}" for i, t in enumerate(titles, 1))


def history_slot_value(titles: Sequence[str]) -> str:
    """Slot value for an item history that may legitimately be empty."""
    if not titles:
        return NO_HISTORY_FALLBACK
    return sequence_to_text(titles)


def candidate_lists_to_text(candidate_sets: Sequence[Sequence[str]]) -> str:
    """Serialize multiple candidate lists for the voting prompt."""
    blocks = []
    for i, titles in enumerate(candidate_sets, 1):
        blocks.append(f"Candidate list {i}:\n" + sequence_to_text(titles))
    return "\n\n".join(blocks)


def load_templates(directory: Optional[Path] = None) -> dict[str, PromptTemplate]:
    """Load all template files; defaults to the versioned set shipped in-package."""
    templates: dict[str, PromptTemplate] = {}
    if directory is not None:
        for name in TEMPLATE_NAMES:
            path = Path(directory) / f"{name}.txt"
            templates[name] = PromptTemplate(name, path.read_text(encoding="utf-8"))
    else:
        pkg = resources.files("graphrec") / "templates"
        for name in TEMPLATE_NAMES:
            body = (pkg / f"{name}.txt").read_text(encoding="utf-8")
            templates[name] = PromptTemplate(name, body)
    return templates
