"""Recover a JSON object from a model completion that may carry reasoning text.

Synthesis prompts ask the model to think step by step, so completions often
look like `<prose>...```json {...}``` <prose>`. Policy: strip code-fence
markers, then take the *last* syntactically balanced top-level JSON object
that parses; the final object is the answer, anything before it is
reasoning.
"""

from __future__ import annotations

import json
import re

from .errors import ExtractionError

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*")


def _balanced_object_spans(text: str) -> list[tuple[int, int]]:
    """Spans of top-level {...} groups, honoring strings and escapes."""
    spans = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
            continue
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append((start, i + 1))
    return spans


def extract_json_object(text: str) -> tuple[dict, str]:
    """Return (parsed object, raw substring). Raises ExtractionError when nothing parses."""
    stripped = _FENCE_RE.sub("", text)
    for start, end in reversed(_balanced_object_spans(stripped)):
        candidate = stripped[start:end]
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj, candidate
    raise ExtractionError(f"no parseable JSON object in completion ({len(text)} chars)")
