"""The agentic retrieval loop: search, read, expand, rewrite, filter, answer."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .expansion import Beam, ExpansionConfig, expand_beams, flatten_beams
from .kg import KgStore, Triple, align_triple_to_chunk, link_triple
from .llm import LlmClient, LlmRequest, LlmResponse, LlmTransportError
from .parsing import ParseError, RewriteOutcome, parse_rerank, parse_rewrite, parse_triples
from .prompts import (
    load_template,
    numbered_passages_block,
    passages_block,
    render_template,
    rewrite_history_block,
    triples_block,
)
from .retrieval import CorpusIndex, Passage, RankedList, hybrid_search, rrf_fuse

logger = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """The engine cannot run as configured (e.g. empty corpus, missing index)."""


class PipelineRunError(RuntimeError):
    """A question run aborted; the partial trace is attached."""

    def __init__(self, message: str, trace: "PipelineTrace") -> None:
        super().__init__(message)
        self.trace = trace


@dataclass
class PipelineOptions:
    """Knobs for a question run; defaults follow the engine's standard setup."""

    k: int = 10
    kappa: float = 60.0
    k_pool: int | None = None  # None means 2*k
    beam_width: int = 4
    max_depth: int = 2
    max_steps: int = 2
    reader_passage_cap: int = 10
    answer_passage_cap: int = 10
    min_link_score: float | None = None
    step_max_tokens: int = 512
    answer_max_tokens: int = 1024

    def expansion(self) -> ExpansionConfig:
        return ExpansionConfig(beam_width=self.beam_width, max_depth=self.max_depth)

    def snapshot(self) -> dict:
        return {
            "k": self.k,
            "kappa": self.kappa,
            "k_pool": self.k_pool,
            "beam_width": self.beam_width,
            "max_depth": self.max_depth,
            "max_steps": self.max_steps,
            "reader_passage_cap": self.reader_passage_cap,
            "answer_passage_cap": self.answer_passage_cap,
            "min_link_score": self.min_link_score,
        }


class AgentState:
    """Per-question mutable state: query history plus the two memories.

    Both memories are duplicate-free and keep first-occurrence order, so
    merging the same items twice is a no-op.
    """

    def __init__(self, original_question: str) -> None:
        self.original_question = original_question
        self.rewrite_history: list[str] = [original_question]
        self.triple_memory: list[Triple] = []
        self.passage_memory: list[str] = []
        self._triples_seen: set[Triple] = set()
        self._passages_seen: set[str] = set()

    @property
    def current_query(self) -> str:
        return self.rewrite_history[-1]

    def merge_triples(self, triples: Sequence[Triple]) -> int:
        added = 0
        for triple in triples:
            if triple not in self._triples_seen:
                self._triples_seen.add(triple)
                self.triple_memory.append(triple)
                added += 1
        return added

    def add_passages(self, passage_ids: Sequence[str]) -> int:
        added = 0
        for pid in passage_ids:
            if pid not in self._passages_seen:
                self._passages_seen.add(pid)
                self.passage_memory.append(pid)
                added += 1
        return added


@dataclass
class StepTrace:
    """Everything one loop iteration saw and produced."""

    step: int
    query: str
    hybrid: RankedList = field(default_factory=list)
    extracted_triples: list[Triple] = field(default_factory=list)
    linked_triples: list[Triple] = field(default_factory=list)
    beams: list[Beam] = field(default_factory=list)
    aligned_passage_ids: list[str] = field(default_factory=list)
    fused: RankedList = field(default_factory=list)
    rewrite: RewriteOutcome | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class PipelineTrace:
    """Structured record of a full question run; serializes deterministically."""

    question: str
    options: dict = field(default_factory=dict)
    steps: list[StepTrace] = field(default_factory=list)
    passage_memory: list[str] = field(default_factory=list)
    triple_memory: list[Triple] = field(default_factory=list)
    filtered_passage_ids: list[str] = field(default_factory=list)
    answer: str = ""
    llm_calls: int = 0
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        def triple_row(t: Triple) -> list[str]:
            return [t.subject, t.predicate, t.object]

        return {
            "question": self.question,
            "options": self.options,
            "steps": [
                {
                    "step": s.step,
                    "query": s.query,
                    "hybrid": [[pid, score] for pid, score in s.hybrid],
                    "extracted_triples": [triple_row(t) for t in s.extracted_triples],
                    "linked_triples": [triple_row(t) for t in s.linked_triples],
                    "beams": [
                        {"triples": [triple_row(t) for t in b.triples], "score": b.score}
                        for b in s.beams
                    ],
                    "aligned_passage_ids": list(s.aligned_passage_ids),
                    "fused": [[pid, score] for pid, score in s.fused],
                    "rewrite": (
                        {"decision": s.rewrite.decision, "next_query": s.rewrite.next_query}
                        if s.rewrite
                        else None
                    ),
                    "warnings": list(s.warnings),
                }
                for s in self.steps
            ],
            "passage_memory": list(self.passage_memory),
            "triple_memory": [triple_row(t) for t in self.triple_memory],
            "filtered_passage_ids": list(self.filtered_passage_ids),
            "answer": self.answer,
            "llm_calls": self.llm_calls,
            "warnings": list(self.warnings),
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


class _CountingClient:
    """Pass-through wrapper so the trace can report how many calls a run made."""

    def __init__(self, inner: LlmClient) -> None:
        self.inner = inner
        self.count = 0

    def complete(self, request: LlmRequest) -> LlmResponse:
        self.count += 1
        return self.inner.complete(request)


def read_step(
    llm: LlmClient,
    passages: Sequence[Passage],
    query: str,
    *,
    max_tokens: int = 512,
    warnings: list[str] | None = None,
) -> list[Triple]:
    """Ask the LLM for fact triples grounded in the given passages.

    Output that yields no parseable triple returns an empty list (with a
    warning when a sink is provided); the pipeline carries on either way.
    """
    prompt = render_template(
        load_template("reader"),
        retrieved_docs=passages_block(passages),
        query=query,
    )
    response = llm.complete(LlmRequest(user=prompt, max_tokens=max_tokens))
    triples = parse_triples(response.text)
    if not triples and warnings is not None:
        warnings.append("read step produced no parseable facts")
    return triples


def rewrite_step(
    llm: LlmClient,
    state: AgentState,
    *,
    max_tokens: int = 512,
    warnings: list[str] | None = None,
) -> RewriteOutcome:
    """Decide whether the triple memory suffices; propose the next query if not.

    An unparseable response terminates the loop (decision Yes) with a warning.
    """
    prompt = render_template(
        load_template("rewrite"),
        query=state.original_question,
        query_rewriting_history=rewrite_history_block(state.rewrite_history[1:]),
        triples=triples_block(state.triple_memory),
    )
    response = llm.complete(LlmRequest(user=prompt, max_tokens=max_tokens))
    try:
        return parse_rewrite(response.text)
    except ParseError as exc:
        if warnings is not None:
            warnings.append(f"unparseable rewrite response, terminating: {exc}")
        return RewriteOutcome(decision="Yes")


def filter_step(
    llm: LlmClient,
    state: AgentState,
    corpus: CorpusIndex,
    *,
    answer_passage_cap: int = 10,
    max_tokens: int = 512,
    warnings: list[str] | None = None,
) -> list[str]:
    """Listwise rerank of the passage memory against the original question.

    Returns passage ids in the LLM's order, capped to answer_passage_cap.
    Parse failure falls back to the memory in insertion order (capped); an
    empty memory short-circuits to [] without an LLM call.
    """
    ids = state.passage_memory
    if not ids:
        return []
    passages = [corpus.get(pid) for pid in ids]
    prompt = render_template(
        load_template("rerank"),
        num_docs=len(passages),
        query=state.original_question,
        triples=triples_block(state.triple_memory),
        retrieved_docs=numbered_passages_block(passages),
    )
    response = llm.complete(LlmRequest(user=prompt, max_tokens=max_tokens))
    try:
        kept = parse_rerank(response.text, len(ids), warnings)
    except ParseError as exc:
        if warnings is not None:
            warnings.append(f"unparseable rerank response, keeping memory order: {exc}")
        return ids[:answer_passage_cap]
    return [ids[i - 1] for i in kept][:answer_passage_cap]


def answer_step(
    llm: LlmClient,
    question: str,
    passages: Sequence[Passage],
    triples: Sequence[Triple],
    *,
    max_tokens: int = 1024,
) -> str:
    """Produce the final answer from the filtered passages and triple memory."""
    prompt = render_template(
        load_template("answer"),
        retrieved_docs=passages_block(passages),
        triples=triples_block(triples),
        query=question,
    )
    response = llm.complete(LlmRequest(user=prompt, max_tokens=max_tokens))
    return response.text.strip()


def run_pipeline(
    question: str,
    corpus: CorpusIndex,
    kg: KgStore,
    llm: LlmClient,
    options: PipelineOptions | None = None,
) -> PipelineTrace:
    """Run the full loop for one question and return its trace.

    Step 1 is retrieval-only on the KG side: hybrid results go straight into
    the passage memory. Later steps link the step's extracted triples into
    the KG, expand them into beams, align the flattened triples back to
    passages and fuse that list with the step's hybrid results before
    appending. After the loop (decision Yes, or max_steps reached) one
    filter call and one answer call finish the run. An LLM transport failure
    aborts with the partial trace attached to PipelineRunError.
    """
    opts = options or PipelineOptions()
    if corpus.size == 0:
        raise ConfigurationError("corpus index is empty; ingest passages first")
    if not question.strip():
        raise ConfigurationError("question must be non-empty")

    counting = _CountingClient(llm)
    state = AgentState(question)
    trace = PipelineTrace(question=question, options=opts.snapshot())

    try:
        for step_no in range(1, opts.max_steps + 1):
            query = state.current_query
            step = StepTrace(step=step_no, query=query)
            trace.steps.append(step)

            step.hybrid = hybrid_search(
                corpus, query, opts.k, kappa=opts.kappa, k_pool=opts.k_pool
            )
            reader_passages = [
                corpus.get(pid) for pid, _ in step.hybrid[: opts.reader_passage_cap]
            ]
            step.extracted_triples = read_step(
                counting,
                reader_passages,
                query,
                max_tokens=opts.step_max_tokens,
                warnings=step.warnings,
            )
            state.merge_triples(step.extracted_triples)

            if step_no == 1:
                state.add_passages([pid for pid, _ in step.hybrid])
            else:
                linked: list[Triple] = []
                for triple in step.extracted_triples:
                    match = link_triple(kg, triple, min_score=opts.min_link_score)
                    if match is not None and match not in linked:
                        linked.append(match)
                step.linked_triples = linked
                step.beams = expand_beams(kg, linked, query, opts.expansion())
                aligned: list[str] = []
                for triple in flatten_beams(step.beams):
                    pid = align_triple_to_chunk(corpus, triple)
                    if pid is not None and pid not in aligned:
                        aligned.append(pid)
                step.aligned_passage_ids = aligned
                aligned_ranked: RankedList = [
                    (pid, 1.0 / rank) for rank, pid in enumerate(aligned, start=1)
                ]
                step.fused = rrf_fuse([aligned_ranked, step.hybrid], opts.kappa)
                state.add_passages([pid for pid, _ in step.fused])

            step.rewrite = rewrite_step(
                counting, state, max_tokens=opts.step_max_tokens, warnings=step.warnings
            )
            if step.rewrite.decision == "Yes" or step_no == opts.max_steps:
                break
            state.rewrite_history.append(step.rewrite.next_query or "")

        trace.filtered_passage_ids = filter_step(
            counting,
            state,
            corpus,
            answer_passage_cap=opts.answer_passage_cap,
            max_tokens=opts.step_max_tokens,
            warnings=trace.warnings,
        )
        trace.answer = answer_step(
            counting,
            question,
            [corpus.get(pid) for pid in trace.filtered_passage_ids],
            state.triple_memory,
            max_tokens=opts.answer_max_tokens,
        )
    except LlmTransportError as exc:
        trace.error = str(exc)
        trace.passage_memory = list(state.passage_memory)
        trace.triple_memory = list(state.triple_memory)
        trace.llm_calls = counting.count
        raise PipelineRunError(f"run aborted: {exc}", trace) from exc

    trace.passage_memory = list(state.passage_memory)
    trace.triple_memory = list(state.triple_memory)
    trace.llm_calls = counting.count
    return trace
