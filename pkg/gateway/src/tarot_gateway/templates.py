"""Prompt templates for reasoner-facing instructions.

The wording that steers a real reasoner lives in versioned text files, not
code, so prompts can be iterated without touching the gateway. Echo mode
never renders a prompt, but the template set is validated at startup either
way so a broken prompt directory fails fast instead of mid-request.
"""
from __future__ import annotations

import string
from importlib import resources
from pathlib import Path
from typing import Dict, Optional

from tarot.backends.types import ReasoningPromptOptions

from tarot_gateway.errors import ApiError

OPTION_ORDER = (
    "explicit_implicit",
    "single_multi",
    "refer_analysis",
    "adjectives",
    "object_reasoning",
    "confusion_awareness",
)

# template name -> placeholders it may use
TEMPLATE_FIELDS = {
    "parse": {"query", "option_lines"},
    "augment": {"target"},
    "criterion": {"target", "refer", "refer_box"},
    "rephrase": {"query", "target", "refer", "relation"},
    "ground": {"expression"},
    "score": {"query", "option_lines"},
    "prefer": {"query", "count", "option_lines"},
    "affiliate": set(),
}

REQUIRED = tuple(sorted(TEMPLATE_FIELDS)) + ("options",)


class ConfigurationError(Exception):
    """Raised when the template directory cannot back a gateway."""


def _placeholders(text: str) -> set:
    names = set()
    for _, field, _, _ in string.Formatter().parse(text):
        if field:
            names.add(field)
    return names


def load_templates(template_dir: Optional[str] = None) -> Dict[str, str]:
    """Read and sanity-check the prompt set; None loads the packaged one."""
    loaded = {}
    if template_dir is None:
        base = resources.files("tarot_gateway").joinpath("templates")
        read = lambda name: base.joinpath(f"{name}.txt").read_text(encoding="utf-8")
        exists = lambda name: base.joinpath(f"{name}.txt").is_file()
    else:
        base = Path(template_dir)
        read = lambda name: (base / f"{name}.txt").read_text(encoding="utf-8")
        exists = lambda name: (base / f"{name}.txt").is_file()

    for name in REQUIRED:
        if not exists(name):
            raise ConfigurationError(f"template {name}.txt missing from {base}")
        loaded[name] = read(name)

    for name, allowed in TEMPLATE_FIELDS.items():
        extras = _placeholders(loaded[name]) - allowed
        if extras:
            raise ConfigurationError(
                f"template {name}.txt uses unknown placeholders {sorted(extras)}"
            )

    option_lines = _parse_option_lines(loaded["options"])
    missing = set(OPTION_ORDER) - set(option_lines)
    if missing:
        raise ConfigurationError(
            f"options.txt lacks instruction lines for {sorted(missing)}"
        )
    return loaded


def _parse_option_lines(text: str) -> Dict[str, str]:
    lines = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, body = line.partition(":")
        if sep and name.strip() in OPTION_ORDER:
            lines[name.strip()] = body.strip()
    return lines


def render_option_lines(templates: Dict[str, str],
                        options: ReasoningPromptOptions) -> str:
    """One instruction line per enabled switch, in fixed order."""
    table = _parse_option_lines(templates["options"])
    picked = [table[name] for name in OPTION_ORDER if getattr(options, name)]
    return "\n".join(picked)


def render_prompt(templates: Dict[str, str], name: str, **fields) -> str:
    if name not in TEMPLATE_FIELDS:
        raise ApiError(500, "internal", f"no template named {name}")
    return templates[name].format(**fields)
