"""FastAPI service exposing the engine over HTTP.

The runtime holds immutable indexes shared by concurrent question requests;
ingest and load-kg swap them under a lock. One app instance is one engine.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException

from ..agent import ConfigurationError, PipelineRunError, run_pipeline
from ..config import EngineConfig
from ..evalkit import eval_record_from_mapping, run_batch
from ..kg import KgStore, load_kg
from ..llm import LlmClient, LlmError
from ..retrieval import (
    CorpusIndex,
    dense_search,
    hybrid_search,
    ingest_corpus,
    load_corpus_file,
    load_index,
    save_index,
    sparse_search,
)
from . import schemas

logger = logging.getLogger(__name__)


class EngineRuntime:
    """Configuration plus the currently loaded corpus index and KG store."""

    def __init__(self, config: EngineConfig) -> None:
        self.config = config
        self.corpus: CorpusIndex | None = None
        self.kg: KgStore | None = None
        self._llm: LlmClient | None = None
        self._write_lock = threading.Lock()
        paths = config.paths
        if paths.index_path and Path(paths.index_path).exists():
            self.corpus = load_index(paths.index_path)
            logger.info("loaded corpus index from %s (%d passages)", paths.index_path, self.corpus.size)
        if paths.kg_path and Path(paths.kg_path).exists():
            self.kg = load_kg(paths.kg_path, literal_filter=config.kg.literal_filter)
            logger.info("loaded kg from %s (%d triples)", paths.kg_path, self.kg.size)

    @property
    def llm(self) -> LlmClient:
        if self._llm is None:
            self._llm = self.config.build_llm_client()
        return self._llm

    def require_corpus(self) -> CorpusIndex:
        if self.corpus is None or self.corpus.size == 0:
            raise ConfigurationError("no corpus loaded: ingest first or configure paths.index_path")
        return self.corpus

    def require_kg(self) -> KgStore:
        if self.kg is None:
            raise ConfigurationError("no KG loaded: load-kg first or configure paths.kg_path")
        return self.kg


def _usage_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=str(exc))


def _runtime_error(exc: Exception) -> HTTPException:
    return HTTPException(status_code=500, detail=str(exc))


def create_app(config: EngineConfig | None = None) -> FastAPI:
    app = FastAPI(title="kgrag", version="0.1.0")
    runtime = EngineRuntime(config or EngineConfig())
    app.state.runtime = runtime

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(
            status="ok",
            passages=runtime.corpus.size if runtime.corpus else 0,
            kg_triples=runtime.kg.size if runtime.kg else 0,
        )

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest(request: schemas.IngestRequest) -> schemas.IngestResponse:
        settings = runtime.config.retrieval
        try:
            records = load_corpus_file(request.corpus_path)
            index = ingest_corpus(
                records, k1=settings.bm25_k1, b=settings.bm25_b, dim=settings.dense_dim
            )
        except (OSError, ValueError) as exc:
            raise _usage_error(exc) from exc
        index_path = request.index_path or runtime.config.paths.index_path
        if index_path:
            save_index(index, index_path)
        with runtime._write_lock:
            runtime.corpus = index
        return schemas.IngestResponse(
            passages=index.size,
            rejected_empty=index.rejected_empty,
            index_path=index_path,
        )

    @app.post("/load-kg", response_model=schemas.LoadKgResponse)
    def load_kg_route(request: schemas.LoadKgRequest) -> schemas.LoadKgResponse:
        literal_filter = (
            request.literal_filter
            if request.literal_filter is not None
            else runtime.config.kg.literal_filter
        )
        if not Path(request.kg_path).exists():
            raise HTTPException(status_code=400, detail=f"kg file not found: {request.kg_path}")
        store = load_kg(request.kg_path, literal_filter=literal_filter)
        with runtime._write_lock:
            runtime.kg = store
        return schemas.LoadKgResponse(
            triples=store.size,
            alias_triples=store.alias_count,
            rejected=store.rejected_count,
            literal_filtered=store.literal_filtered,
            duplicates=store.duplicate_count,
        )

    @app.post("/search", response_model=schemas.SearchResponse)
    def search(request: schemas.SearchRequest) -> schemas.SearchResponse:
        try:
            corpus = runtime.require_corpus()
        except ConfigurationError as exc:
            raise _usage_error(exc) from exc
        settings = runtime.config.retrieval
        if request.mode == "sparse":
            ranked = sparse_search(corpus, request.query, request.k)
        elif request.mode == "dense":
            ranked = dense_search(corpus, request.query, request.k)
        else:
            ranked = hybrid_search(
                corpus, request.query, request.k, kappa=settings.kappa, k_pool=settings.k_pool
            )
        return schemas.SearchResponse(
            results=[
                schemas.SearchHit(id=pid, score=score, text=corpus.get(pid).text)
                for pid, score in ranked
            ]
        )

    @app.post("/ask", response_model=schemas.AskResponse)
    def ask(request: schemas.AskRequest) -> schemas.AskResponse:
        try:
            corpus = runtime.require_corpus()
            kg = runtime.require_kg()
            llm = runtime.llm
        except ConfigurationError as exc:
            raise _usage_error(exc) from exc
        try:
            trace = run_pipeline(
                request.question, corpus, kg, llm, runtime.config.pipeline_options()
            )
        except ConfigurationError as exc:
            raise _usage_error(exc) from exc
        except (PipelineRunError, LlmError) as exc:
            raise _runtime_error(exc) from exc
        trace_path = None
        trace_dir = runtime.config.paths.trace_dir
        if trace_dir:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            digest = hashlib.sha256(request.question.encode("utf-8")).hexdigest()[:12]
            trace_path = str(Path(trace_dir) / f"trace_{digest}.json")
            trace.save(trace_path)
        return schemas.AskResponse(
            answer=trace.answer,
            steps=len(trace.steps),
            llm_calls=trace.llm_calls,
            filtered_passage_ids=trace.filtered_passage_ids,
            trace=trace.to_dict() if request.include_trace else None,
            trace_path=trace_path,
        )

    @app.post("/batch", response_model=schemas.BatchResponse)
    def batch(request: schemas.BatchRequest) -> schemas.BatchResponse:
        try:
            corpus = runtime.require_corpus()
            kg = runtime.require_kg()
            llm = runtime.llm
            records = [eval_record_from_mapping(r) for r in request.records]
            if not records:
                raise ValueError("batch request has no records")
        except (ConfigurationError, ValueError) as exc:
            raise _usage_error(exc) from exc
        report = run_batch(
            records,
            corpus,
            kg,
            llm,
            runtime.config.pipeline_options(),
            trace_dir=request.trace_dir or runtime.config.paths.trace_dir,
            max_workers=request.max_workers,
        )
        return schemas.BatchResponse(report=report.to_dict())

    @app.post("/taxonomy/sample", response_model=schemas.SampleTaxonomyResponse)
    def taxonomy_sample(request: schemas.SampleTaxonomyRequest) -> schemas.SampleTaxonomyResponse:
        from ..evalkit import default_taxonomy, sample_combinations

        try:
            combos = sample_combinations(default_taxonomy(), request.seed, request.count)
        except ValueError as exc:
            raise _usage_error(exc) from exc
        return schemas.SampleTaxonomyResponse(combinations=[list(c) for c in combos])

    return app
