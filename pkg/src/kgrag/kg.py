"""Knowledge-graph triple store: loading, aliasing, sparse linking, passage alignment."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .retrieval import Bm25Index, CorpusIndex, sparse_search, tokenize

logger = logging.getLogger(__name__)

ALIAS_PREDICATE = "alias"


@dataclass(frozen=True)
class Triple:
    """A (subject, predicate, object) fact; fields are trimmed and non-empty."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name).strip()
            if not value:
                raise ValueError(f"triple {name} is empty")
            object.__setattr__(self, name, value)


def verbalize_triple(triple: Triple) -> str:
    """Space-joined surface form used for sparse matching."""
    return f"{triple.subject} {triple.predicate} {triple.object}"


@dataclass
class KgStore:
    """Deduplicated triples with an entity adjacency index and a BM25 index
    over verbalized triples (keys are triple offsets)."""

    triples: list[Triple] = field(default_factory=list)
    adjacency: dict[str, list[int]] = field(default_factory=dict)
    bm25: Bm25Index = field(default_factory=Bm25Index)
    alias_count: int = 0
    rejected_count: int = 0
    literal_filtered: int = 0
    duplicate_count: int = 0

    _seen: set[Triple] = field(default_factory=set, repr=False)

    @property
    def size(self) -> int:
        return len(self.triples)

    def add(self, triple: Triple) -> bool:
        """Append a triple unless it is a field-wise duplicate."""
        if triple in self._seen:
            self.duplicate_count += 1
            return False
        offset = len(self.triples)
        self.triples.append(triple)
        self._seen.add(triple)
        for entity in {triple.subject, triple.object}:
            self.adjacency.setdefault(entity, []).append(offset)
        self.bm25.add(offset, tokenize(verbalize_triple(triple)))
        return True

    def neighbors(self, entity: str) -> list[int]:
        """Offsets of triples in which the entity appears as subject or object."""
        return self.adjacency.get(entity, [])


def _iter_kg_lines(path: str | Path) -> Iterator[object]:
    """Yield parsed records from a line-delimited JSON file; None for bad lines."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None


def _clean(value: object) -> str | None:
    if isinstance(value, str) and value.strip():
        return value.strip()
    return None


def load_kg(
    source: str | Path | Iterable[Mapping[str, object]],
    *,
    literal_filter: bool = True,
) -> KgStore:
    """Build a KgStore from triple and entity-alias records.

    Triple records carry subject/predicate/object plus an optional
    object_is_literal flag; literal-object triples are dropped when
    literal_filter is on. An alias record ({"entity": ..., "aliases": [...]})
    materializes exactly one (entity, "alias", first-alias) triple per entity;
    later alias records for the same entity are ignored. Malformed records are
    rejected and counted, never fatal. Field-wise duplicates are collapsed.
    """
    if isinstance(source, (str, Path)):
        records: Iterable[object] = _iter_kg_lines(source)
    else:
        records = source
    store = KgStore()
    aliased: set[str] = set()
    for record in records:
        if not isinstance(record, Mapping):
            store.rejected_count += 1
            continue
        if "entity" in record:
            entity = _clean(record.get("entity"))
            aliases = record.get("aliases")
            if entity is None or not isinstance(aliases, list):
                store.rejected_count += 1
                continue
            if entity in aliased or not aliases:
                continue
            first = _clean(aliases[0])
            if first is None:
                store.rejected_count += 1
                continue
            aliased.add(entity)
            if store.add(Triple(entity, ALIAS_PREDICATE, first)):
                store.alias_count += 1
            continue
        subject = _clean(record.get("subject"))
        predicate = _clean(record.get("predicate"))
        obj = _clean(record.get("object"))
        if subject is None or predicate is None or obj is None:
            store.rejected_count += 1
            continue
        if literal_filter and bool(record.get("object_is_literal", False)):
            store.literal_filtered += 1
            continue
        store.add(Triple(subject, predicate, obj))
    logger.info(
        "kg load: %d triples (%d alias), %d rejected, %d literal-filtered, %d duplicates",
        store.size,
        store.alias_count,
        store.rejected_count,
        store.literal_filtered,
        store.duplicate_count,
    )
    return store


def link_triple(
    store: KgStore,
    proximal: Triple,
    *,
    min_score: float | None = None,
) -> Triple | None:
    """Top-1 BM25 match of the verbalized proximal triple against store triples.

    Returns None when the store is empty, no store triple shares a term, or
    the best score falls below min_score (no threshold by default). Ties are
    broken by ascending triple offset.
    """
    if not store.size:
        return None
    scores = store.bm25.scores(tokenize(verbalize_triple(proximal)))
    if not scores:
        return None
    offset, best = min(scores.items(), key=lambda item: (-item[1], item[0]))
    if min_score is not None and best < min_score:
        return None
    return store.triples[offset]  # type: ignore[index]


def align_triple_to_chunk(index: CorpusIndex, triple: Triple) -> str | None:
    """Top-1 sparse match of the verbalized triple against the passage corpus."""
    hits = sparse_search(index, verbalize_triple(triple), 1)
    return hits[0][0] if hits else None
