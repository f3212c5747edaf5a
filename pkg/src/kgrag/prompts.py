"""Prompt template loading and rendering.

Templates live as UTF-8 text files under kgrag/templates and use named
placeholders ({retrieved_docs}, {query}, {query_rewriting_history},
{triples}, {num_docs}). Only those names are substituted; every other
curly-brace span in a template (for example the literal {Yes}/{No} markers)
passes through untouched, which is why str.format is not used here.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Sequence

from .kg import Triple
from .retrieval import Passage

PLACEHOLDERS = ("retrieved_docs", "query", "query_rewriting_history", "triples", "num_docs")

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a bundled template by stem, e.g. load_template("reader")."""
    return resources.files("kgrag").joinpath("templates", f"{name}.txt").read_text("utf-8")


def render_template(template: str, **values: object) -> str:
    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise KeyError(f"template placeholder {{{name}}} was not provided")
        return str(values[name])

    return _PLACEHOLDER_RE.sub(substitute, template)


def passages_block(passages: Sequence[Passage]) -> str:
    """Plain passage texts separated by blank lines (reader/answer prompts)."""
    return "\n\n".join(p.text for p in passages)


def numbered_passages_block(passages: Sequence[Passage]) -> str:
    """1-based numbered passages for the rerank prompt, one [i] block each."""
    return "\n\n".join(f"[{i}] {p.text}" for i, p in enumerate(passages, start=1))


def triples_block(triples: Sequence[Triple]) -> str:
    """One (subject, predicate, object) line per triple."""
    return "\n".join(f"({t.subject}, {t.predicate}, {t.object})" for t in triples)


def rewrite_history_block(rewrites: Sequence[str]) -> str:
    """The Rewrites: block listing accepted rewrites; empty when there are none."""
    if not rewrites:
        return ""
    lines = ["Rewrites:"]
    lines.extend(f"Rewrite {i}: {q}" for i, q in enumerate(rewrites, start=1))
    return "\n".join(lines)
