"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field
from typing import Literal


class HealthResponse(BaseModel):
    status: str
    passages: int
    kg_triples: int


class IngestRequest(BaseModel):
    corpus_path: str
    index_path: str | None = None


class IngestResponse(BaseModel):
    passages: int
    rejected_empty: int
    index_path: str | None = None


class LoadKgRequest(BaseModel):
    kg_path: str
    literal_filter: bool | None = None


class LoadKgResponse(BaseModel):
    triples: int
    alias_triples: int
    rejected: int
    literal_filtered: int
    duplicates: int


class SearchRequest(BaseModel):
    query: str
    k: int = 10
    mode: Literal["hybrid", "sparse", "dense"] = "hybrid"


class SearchHit(BaseModel):
    id: str
    score: float
    text: str


class SearchResponse(BaseModel):
    results: list[SearchHit]


class AskRequest(BaseModel):
    question: str
    include_trace: bool = False


class AskResponse(BaseModel):
    answer: str
    steps: int
    llm_calls: int
    filtered_passage_ids: list[str]
    trace: dict | None = None
    trace_path: str | None = None


class BatchRequest(BaseModel):
    records: list[dict] = Field(default_factory=list)
    trace_dir: str | None = None
    max_workers: int = 1


class BatchResponse(BaseModel):
    report: dict


class SampleTaxonomyRequest(BaseModel):
    seed: int = 0
    count: int = 1


class SampleTaxonomyResponse(BaseModel):
    combinations: list[list[str]]
