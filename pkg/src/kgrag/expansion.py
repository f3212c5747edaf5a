"""Diverse beam expansion over KG triples, plus breadth-first flattening."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .kg import KgStore, Triple, verbalize_triple
from .retrieval import tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpansionConfig:
    """Beam width and extension depth for triple expansion."""

    beam_width: int = 4
    max_depth: int = 2

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")


@dataclass(frozen=True)
class Beam:
    """An entity-connected triple sequence with its running score."""

    triples: tuple[Triple, ...]
    score: float

    def verbalized(self) -> tuple[str, ...]:
        return tuple(verbalize_triple(t) for t in self.triples)


def query_term_coverage(triple: Triple, query: str) -> float:
    """Fraction of distinct query terms present in the verbalized triple."""
    terms = set(tokenize(query))
    if not terms:
        return 0.0
    triple_terms = set(tokenize(verbalize_triple(triple)))
    return len(terms & triple_terms) / len(terms)


def _sort_key(beam: Beam) -> tuple[float, tuple[str, ...]]:
    return (-beam.score, beam.verbalized())


def _select(candidates: Sequence[Beam], width: int) -> list[Beam]:
    """Keep at most one beam per distinct last triple, then the global top-width.

    Both cuts order by score descending with ties broken by the
    lexicographic verbalized-triple sequence.
    """
    best_per_last: dict[Triple, Beam] = {}
    for beam in candidates:
        last = beam.triples[-1]
        current = best_per_last.get(last)
        if current is None or _sort_key(beam) < _sort_key(current):
            best_per_last[last] = beam
    return sorted(best_per_last.values(), key=_sort_key)[:width]


def expand_beams(
    store: KgStore,
    seeds: Sequence[Triple],
    query: str,
    config: ExpansionConfig = ExpansionConfig(),
) -> list[Beam]:
    """Grow entity-connected triple sequences from seed triples.

    Seeds start as single-triple beams scored by query-term coverage; the
    seed set itself is deduplicated and cut to the beam width. At each depth
    a beam is replaced by one candidate per store triple that shares an
    entity with the beam's last triple and is not already in the sequence,
    scored by the mean per-triple coverage; beams with no valid extension
    survive unchanged. After the per-depth diversity and width cuts the
    result is at most beam_width beams, sorted by score descending (ties by
    lexicographic verbalized sequence).
    """
    if not seeds:
        return []
    coverage: dict[Triple, float] = {}

    def rel(triple: Triple) -> float:
        if triple not in coverage:
            coverage[triple] = query_term_coverage(triple, query)
        return coverage[triple]

    beams = _select([Beam((seed,), rel(seed)) for seed in seeds], config.beam_width)
    for _depth in range(config.max_depth):
        candidates: list[Beam] = []
        for beam in beams:
            last = beam.triples[-1]
            offsets = sorted(set(store.neighbors(last.subject)) | set(store.neighbors(last.object)))
            extended = False
            for offset in offsets:
                triple = store.triples[offset]
                if triple in beam.triples:
                    continue
                sequence = beam.triples + (triple,)
                score = sum(rel(t) for t in sequence) / len(sequence)
                candidates.append(Beam(sequence, score))
                extended = True
            if not extended:
                candidates.append(beam)
        beams = _select(candidates, config.beam_width)
    return beams


def flatten_beams(beams: Sequence[Beam]) -> list[Triple]:
    """Position-major traversal of beams, deduplicated at first occurrence."""
    flat: list[Triple] = []
    seen: set[Triple] = set()
    longest = max((len(b.triples) for b in beams), default=0)
    for position in range(longest):
        for beam in beams:
            if position >= len(beam.triples):
                continue
            triple = beam.triples[position]
            if triple not in seen:
                seen.add(triple)
                flat.append(triple)
    return flat
