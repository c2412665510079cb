"""Placeholder templates: ``{query}`` and ``{chan:<channel>}``."""

from __future__ import annotations

from typing import Mapping

from .payloads import render_text

UNKNOWN = "<unknown>"


class TemplateError(ValueError):
    pass


def parse_template(template: str) -> list[tuple[str, str]]:
    """Split *template* into ``(kind, value)`` parts.

    kind is ``"lit"``, ``"query"`` or ``"chan"``.
    """
    if not isinstance(template, str):
        raise TemplateError("template must be a string")
    parts: list[tuple[str, str]] = []
    i = 0
    n = len(template)
    lit_start = 0
    while i < n:
        c = template[i]
        if c == "}":
            raise TemplateError(f"unmatched '}}' at offset {i}")
        if c != "{":
            i += 1
            continue
        end = template.find("}", i + 1)
        if end < 0:
            raise TemplateError(f"unterminated placeholder at offset {i}")
        body = template[i + 1:end]
        if body == "query":
            part = ("query", "")
        elif body.startswith("chan:"):
            name = body[5:]
            if not name or any(ch.isspace() or ch == "{" for ch in name):
                raise TemplateError(f"bad channel placeholder {{{body}}}")
            part = ("chan", name)
        else:
            raise TemplateError(f"unknown placeholder {{{body}}}")
        if lit_start < i:
            parts.append(("lit", template[lit_start:i]))
        parts.append(part)
        i = end + 1
        lit_start = i
    if lit_start < n:
        parts.append(("lit", template[lit_start:]))
    return parts


def template_channels(template: str) -> list[str]:
    """Channel names referenced by ``{chan:...}``, in first-use order."""
    seen: list[str] = []
    for kind, value in parse_template(template):
        if kind == "chan" and value not in seen:
            seen.append(value)
    return seen


def render_template(parts, query: str, latest: Mapping) -> str:
    out = []
    for kind, value in parts:
        if kind == "lit":
            out.append(value)
        elif kind == "query":
            out.append(query)
        else:
            payload = latest.get(value)
            out.append(UNKNOWN if payload is None else render_text(payload))
    return "".join(out)
