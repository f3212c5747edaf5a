"""Lenient parsers for LLM output: fact triples, rewrite decisions, rerank lists."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .kg import Triple

_BRACKET_INT_RE = re.compile(r"\[(\d+)\]")
_REWRITE_HEAD_RE = re.compile(r"^\s*\{\s*(yes|no)\s*\}", re.IGNORECASE)
_CURLY_GROUP_RE = re.compile(r"\{([^{}]*)\}")


class ParseError(ValueError):
    """An LLM response did not match the expected output contract."""


@dataclass(frozen=True)
class RewriteOutcome:
    """Termination decision plus the next query when the decision is No."""

    decision: str  # "Yes" or "No"
    next_query: str | None = None


def _balanced_groups(text: str) -> list[str]:
    """Inner text of every maximal (top-level) parenthesized group."""
    groups = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "(":
            if depth == 0:
                start = i
            depth += 1
        elif ch == ")" and depth > 0:
            depth -= 1
            if depth == 0:
                groups.append(text[start + 1 : i])
    return groups


def _split_fields(inner: str) -> tuple[str, str, str] | None:
    """Resolve a group body into exactly three fields, or None if malformed.

    Exactly three double-quoted segments win outright (commas inside quotes
    stay part of the field); otherwise the body is split on commas outside
    quotes and nested parentheses.
    """
    quoted = re.findall(r'"([^"]*)"', inner)
    if len(quoted) == 3:
        fields = [q.strip() for q in quoted]
    else:
        parts: list[str] = []
        buf: list[str] = []
        depth = 0
        in_quote = False
        for ch in inner:
            if ch == '"':
                in_quote = not in_quote
            elif ch == "(" and not in_quote:
                depth += 1
            elif ch == ")" and not in_quote:
                depth -= 1
            if ch == "," and depth == 0 and not in_quote:
                parts.append("".join(buf))
                buf = []
            else:
                buf.append(ch)
        parts.append("".join(buf))
        fields = [p.strip().strip('"').strip("'").strip() for p in parts]
    if len(fields) != 3 or not all(fields):
        return None
    return fields[0], fields[1], fields[2]


def parse_triples(text: str) -> list[Triple]:
    """Extract fact triples from free-form LLM output.

    Every maximal parenthesized group with exactly three fields becomes a
    triple; malformed groups are dropped silently, textual order is kept and
    duplicates are removed. Never raises on messy input.
    """
    triples: list[Triple] = []
    seen: set[Triple] = set()
    for inner in _balanced_groups(text):
        fields = _split_fields(inner)
        if fields is None:
            continue
        triple = Triple(*fields)
        if triple not in seen:
            seen.add(triple)
            triples.append(triple)
    return triples


def parse_rewrite(text: str) -> RewriteOutcome:
    """Parse a termination response: {Yes}, or {No} {next query}.

    The first curly group decides (case-insensitive, leading whitespace
    ignored); a No requires a non-empty second group. Anything else raises
    ParseError.
    """
    head = _REWRITE_HEAD_RE.match(text)
    if not head:
        raise ParseError("rewrite response must begin with {Yes} or {No}")
    decision = head.group(1).lower()
    if decision == "yes":
        return RewriteOutcome(decision="Yes")
    rest = text[head.end() :]
    group = _CURLY_GROUP_RE.search(rest)
    if not group or not group.group(1).strip():
        raise ParseError("rewrite said {No} but no next query group was found")
    return RewriteOutcome(decision="No", next_query=group.group(1).strip())


def parse_rerank(
    text: str,
    num_passages: int,
    warnings: list[str] | None = None,
) -> list[int]:
    """Parse a rerank response into ordered 1-based passage indices.

    The literal `None` (case-insensitive, backticks/quotes tolerated) means
    no relevant passages. Bracketed identifiers are kept in response order;
    duplicates and out-of-range identifiers are dropped (with a warning when
    a sink is provided). No identifiers and no None raises ParseError.
    """
    stripped = text.strip().strip("`'\"").strip()
    if stripped.lower() == "none":
        return []
    found = [int(m) for m in _BRACKET_INT_RE.findall(text)]
    if not found:
        raise ParseError("rerank response has no bracketed identifiers and is not None")
    kept: list[int] = []
    seen: set[int] = set()
    for idx in found:
        if idx < 1 or idx > num_passages:
            if warnings is not None:
                warnings.append(f"rerank referenced out-of-range passage [{idx}]")
            continue
        if idx in seen:
            continue
        seen.add(idx)
        kept.append(idx)
    return kept
