"""Deterministic offline backend producing structured replies for any template.

Used for tests and desk-scale dry runs: replies are pure functions of the
prompt's slot bindings, so a whole pipeline run is bit-reproducible without
any model. Summaries echo the history in a parseable form, recommendations
draw from that echoed history before padding with synthetic titles, and
votes pick candidates by cross-list frequency.
"""

from __future__ import annotations

import hashlib
import re

from .gateway import Backend, GenerationParams, PromptCall, ScriptedMockBackend

_HISTORY_PREFIX = "The user bought"
_NUMBERED_RE = re.compile(r"^\s*\d+\.\s+(.+?)\s*$")


def _digest(*parts: str) -> int:
    h = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def _numbered_titles(text: str) -> list[str]:
    titles, seen = [], set()
    for line in text.splitlines():
        m = _NUMBERED_RE.match(line)
        if m:
            t = m.group(1)
            if t.lower() not in seen:
                seen.add(t.lower())
                titles.append(t)
    return titles


def _reply_list(titles: list[str]) -> str:
    return "\n".join(f"{i}. {t}" for i, t in enumerate(titles, 1))


def synthesize_reply(call: PromptCall) -> str:
    """Template-aware canned reply derived only from the slot bindings."""
    b = dict(call.bindings)
    if call.template in ("summarize-short", "summarize-long"):
        history = _numbered_titles(b.get("sequence", ""))
        tag = _digest(b.get("sequence", "")) % 1000
        lines = [f"{_HISTORY_PREFIX} {t}." for t in history]
        lines.append("Based on this history the user favors practical products.")
        lines.extend(f"{i}. Category {name} {tag}"
                     for i, name in enumerate(("Alpha", "Beta", "Gamma"), 1))
        return "\n".join(lines)
    if call.template == "recommend-category":
        n = int(b.get("N", "10"))
        category = b.get("category", "General")
        history = [line[len(_HISTORY_PREFIX):].strip(" .")
                   for line in b.get("preferences", "").splitlines()
                   if line.startswith(_HISTORY_PREFIX)]
        offset = _digest(category, b.get("preferences", "")) % max(len(history), 1)
        picks = history[offset:] + history[:offset]
        while len(picks) < n:
            picks.append(f"{category} pick {len(picks) + 1}")
        return _reply_list(picks[:n])
    if call.template == "collaborate":
        n = int(b.get("N", "10"))
        pool = _numbered_titles(b.get("neighbors", ""))
        if not pool:
            return "I cannot find any items to recommend."
        offset = _digest(b.get("sequence", ""), b.get("neighbors", "")) % len(pool)
        picks = pool[offset:] + pool[:offset]
        return _reply_list(picks[:n])
    if call.template == "vote":
        n = int(b.get("N", "10"))
        candidates = b.get("candidates", "")
        counts: dict[str, int] = {}
        first_pos: dict[str, int] = {}
        order: dict[str, str] = {}
        occurrences = [m.group(1) for line in candidates.splitlines()
                       if (m := _NUMBERED_RE.match(line))]
        for pos, title in enumerate(occurrences):
            key = title.lower()
            counts[key] = counts.get(key, 0) + 1
            first_pos.setdefault(key, pos)
            order.setdefault(key, title)
        ranked = sorted(order, key=lambda k: (-counts[k], first_pos[k]))
        return _reply_list([order[k] for k in ranked[:n]])
    # Unknown template: echo something parseable but content-free.
    return "1. Placeholder item"


class DeterministicMockBackend(ScriptedMockBackend):
    """Scripted mock whose fallback synthesizes replies from bindings."""

    def __init__(self, script: dict[str, str] | None = None):
        super().__init__(script=script, fallback=synthesize_reply)

    def complete(self, call: PromptCall, params: GenerationParams,
                 seed: int = 0) -> str:
        return super().complete(call, params, seed)
