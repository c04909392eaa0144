"""Prompt templates with `<UPPER_SNAKE>` placeholders.

Templates are plain text files. A placeholder is an angle-bracketed
upper-snake token such as `<CONTENT>`; lower-case bracketed text (e.g. the
literal `"<turn_1>"` inside a JSON format example) is not a placeholder and
survives rendering untouched. The compound token `<TARGET_ACT, TARGET_TOPIC>`
is treated as a single placeholder keyed by its inner text.

Built-in templates ship with the package; any of them can be overridden by
dropping a same-named `.txt` file into a directory passed as `search_dir`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import TemplateError

PLACEHOLDER_RE = re.compile(r"<([A-Z][A-Z0-9_]*(?:,\s*[A-Z][A-Z0-9_]*)*)>")

# template name -> placeholders that must appear in the file
REQUIRED_PLACEHOLDERS: dict[str, frozenset[str]] = {
    "query_gen": frozenset({"INFO_FLOWS_STEPS", "CONTENT"}),
    "response_gen": frozenset({"CONTENT"}),
    "scenario_gen": frozenset({"COUNT", "INTENT_NAME", "INTENT_DESCRIPTION"}),
    "light_agent": frozenset(
        {"AGENT_CHARACTER", "AGENT_PERSONA", "USER_CHARACTER", "USER_PERSONA", "SETTING", "DIALOGUE_CONTEXT"}
    ),
    "topdial_agent": frozenset(
        {"AGENT_ROLE", "USER_NAME", "USER_PROFILE", "TARGET_ACT", "TARGET_TOPIC", "DIALOGUE_CONTEXT"}
    ),
    "light_judge": frozenset({"AGENT_CHARACTER", "SETTING", "DIALOGUE_CONTEXT", "RESPONSE"}),
    "topdial_judge": frozenset(
        {"TARGET_ACT, TARGET_TOPIC", "AGENT_ROLE", "USER_PROFILE", "TARGET_ACT", "TARGET_TOPIC", "DIALOGUE_CONTEXT", "RESPONSE"}
    ),
    "mteval_judge": frozenset({"DIALOGUE_CONTEXT", "INSTRUCTION", "RESPONSE"}),
}


def _normalize_key(inner: str) -> str:
    return re.sub(r",\s*", ", ", inner)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    placeholders: frozenset[str]

    @classmethod
    def from_text(cls, name: str, text: str, required: frozenset[str] | None = None) -> "PromptTemplate":
        found = frozenset(_normalize_key(m.group(1)) for m in PLACEHOLDER_RE.finditer(text))
        required = required if required is not None else REQUIRED_PLACEHOLDERS.get(name)
        if required:
            missing = sorted(required - found)
            if missing:
                raise TemplateError(f"template {name!r} is missing placeholder(s): {', '.join(f'<{m}>' for m in missing)}")
        return cls(name=name, text=text, placeholders=found)

    def render(self, values: dict[str, str]) -> str:
        """Substitute every placeholder; error if any would remain unfilled."""
        normalized = {_normalize_key(k): v for k, v in values.items()}
        unfilled = sorted(self.placeholders - normalized.keys())
        if unfilled:
            raise TemplateError(
                f"template {self.name!r} has unsubstituted placeholder(s): {', '.join(f'<{p}>' for p in unfilled)}"
            )

        def replace(match: re.Match) -> str:
            return normalized[_normalize_key(match.group(1))]

        # single-pass sub: every original placeholder is replaced, and
        # replacement text is never re-scanned, so values containing
        # angle-bracketed text pass through verbatim
        return PLACEHOLDER_RE.sub(replace, self.text)


def load_template(name: str, search_dir: str | Path | None = None) -> PromptTemplate:
    """Load a built-in template, preferring an override file when search_dir has one."""
    if search_dir is not None:
        override = Path(search_dir) / f"{name}.txt"
        if override.exists():
            return PromptTemplate.from_text(name, override.read_text("utf-8"))
    ref = resources.files("turnsmith").joinpath(f"templates/{name}.txt")
    try:
        text = ref.read_text("utf-8")
    except FileNotFoundError as exc:
        raise TemplateError(f"no template named {name!r}") from exc
    return PromptTemplate.from_text(name, text)


def builtin_template_names() -> list[str]:
    return sorted(REQUIRED_PLACEHOLDERS)
