"""Evaluation utilities: question taxonomy sampling, answer metrics, batch runs."""

from __future__ import annotations

import json
import logging
import random
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .agent import PipelineOptions, PipelineRunError, PipelineTrace, run_pipeline
from .kg import KgStore
from .llm import LlmClient
from .retrieval import CorpusIndex

logger = logging.getLogger(__name__)

_PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Category:
    """One taxonomy category; probability is the sampling weight actually used.

    raw_probability records the published weight when it differs from the
    normalized one (the formulation axis ships probabilities that sum to 0.8,
    which cannot be sampled as-is).
    """

    name: str
    probability: float
    description: str = ""
    raw_probability: float | None = None


def _validate_axis(axis_name: str, categories: Sequence[Category]) -> None:
    if not categories:
        raise ValueError(f"{axis_name}: at least one category is required")
    names = [c.name for c in categories]
    if len(set(names)) != len(names):
        raise ValueError(f"{axis_name}: category names must be unique")
    for c in categories:
        if not (0.0 < c.probability <= 1.0):
            raise ValueError(f"{axis_name}: probability out of range for {c.name!r}")
    total = sum(c.probability for c in categories)
    if abs(total - 1.0) > _PROB_TOLERANCE:
        raise ValueError(f"{axis_name}: probabilities sum to {total}, expected 1.0")


@dataclass(frozen=True)
class TaxonomyConfig:
    """Three independent categorizations of generated questions."""

    formulations: tuple[Category, ...]
    premises: tuple[Category, ...]
    answer_types: tuple[Category, ...]

    def __post_init__(self) -> None:
        _validate_axis("formulations", self.formulations)
        _validate_axis("premises", self.premises)
        _validate_axis("answer_types", self.answer_types)


def default_taxonomy() -> TaxonomyConfig:
    """The stock taxonomy: 8 formulations, 2 premises, 5 answer types.

    The eight formulation weights are published as 10% each (sum 0.8); they
    are renormalized to 0.125 for sampling with the raw value kept in
    raw_probability.
    """
    formulations = tuple(
        Category(name, 0.125, description, raw_probability=0.10)
        for name, description in (
            ("Concise and Natural", "A direct natural question consisting of a few words."),
            ("Verbose and Natural", "A long question consisting of more than 9 words."),
            (
                "List-based",
                "Asks for multiple items or examples. Often begins with "
                "'What are some' or 'List the'.",
            ),
            (
                "Definition-based",
                "Explicitly asks for meaning or definition of a term. Often "
                "begins with 'What is' or 'Define'.",
            ),
            (
                "Opinion-seeking",
                "Asks for subjective viewpoints rather than facts. Includes "
                "phrases like 'What do you think' or 'Should we'.",
            ),
            (
                "Hypothetical",
                "About imaginary scenarios. Often begins with 'What if', "
                "'Imagine that', or 'Suppose that'.",
            ),
            (
                "How-to",
                "Seeks procedural knowledge or step-by-step guidance. Begins "
                "with 'How to' or 'How do I'.",
            ),
            (
                "Yes/No",
                "Can be answered with 'yes' or 'no'. Often begins with 'Is', "
                "'Are', 'Do', 'Can', 'Will'.",
            ),
        )
    )
    premises = (
        Category(
            "w/o Premise",
            0.70,
            "A question without any premise or information about the user.",
        ),
        Category(
            "w/ Premise",
            0.30,
            "A question starting with a short premise revealing user needs "
            "or information.",
        ),
    )
    answer_types = (
        Category(
            "Factoid",
            0.15,
            "Seeks specific, concise information like names, dates, or "
            "numbers about a particular subject.",
        ),
        Category(
            "Multi-aspect",
            0.25,
            "About two different aspects of the same entity requiring "
            "information from two separate documents.",
        ),
        Category(
            "Comparison",
            0.30,
            "Compares two related concepts by a common meaningful attribute "
            "using information from two documents.",
        ),
        Category(
            "Path-following",
            0.15,
            "Requires following a clear, predefined reasoning path between "
            "entities to find the answer.",
        ),
        Category(
            "Path-finding",
            0.15,
            "Requires identifying the correct path when many potential "
            "connections between entities exist.",
        ),
    )
    return TaxonomyConfig(formulations, premises, answer_types)


def _draw(rng: random.Random, categories: Sequence[Category]) -> str:
    u = rng.random()
    cumulative = 0.0
    for category in categories:
        cumulative += category.probability
        if u < cumulative:
            return category.name
    return categories[-1].name


def sample_combinations(
    config: TaxonomyConfig, seed: int, count: int
) -> list[tuple[str, str, str]]:
    """Draw (formulation, premise, answer_type) combinations via inverse CDF.

    Axes are sampled independently from one seeded generator, so the full
    sequence is reproducible from the seed.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    rng = random.Random(seed)
    return [
        (
            _draw(rng, config.formulations),
            _draw(rng, config.premises),
            _draw(rng, config.answer_types),
        )
        for _ in range(count)
    ]


def sample_combination(config: TaxonomyConfig, seed: int) -> tuple[str, str, str]:
    """Single seeded draw; sample_combination(c, s) == sample_combinations(c, s, 1)[0]."""
    return sample_combinations(config, seed, 1)[0]


def normalize_answer(text: str) -> list[str]:
    """Lowercase, strip punctuation and articles, split on whitespace."""
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    return [tok for tok in text.split() if tok not in ("a", "an", "the")]


def exact_match(prediction: str, gold: str) -> float:
    return 1.0 if normalize_answer(prediction) == normalize_answer(gold) else 0.0


def token_f1(prediction: str, gold: str) -> float:
    pred_tokens = normalize_answer(prediction)
    gold_tokens = normalize_answer(gold)
    if not pred_tokens or not gold_tokens:
        return 1.0 if pred_tokens == gold_tokens else 0.0
    common = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_tokens)
    recall = common / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def recall_at_k(retrieved_ids: Sequence[str], gold_ids: Sequence[str], k: int) -> float:
    """Fraction of gold passages present in the first k retrieved ids."""
    if not gold_ids:
        raise ValueError("recall_at_k needs at least one gold passage id")
    head = set(retrieved_ids[:k])
    return sum(1 for gid in gold_ids if gid in head) / len(gold_ids)


@dataclass(frozen=True)
class EvalRecord:
    """One benchmark question with optional gold labels."""

    question: str
    gold_answer: str | None = None
    gold_passage_ids: tuple[str, ...] | None = None


def eval_record_from_mapping(record: Mapping[str, object]) -> EvalRecord:
    question = record.get("question")
    if not isinstance(question, str) or not question.strip():
        raise ValueError(f"eval record needs a non-empty question: {record!r}")
    gold_answer = record.get("gold_answer")
    gold_ids = record.get("gold_passage_ids")
    return EvalRecord(
        question=question,
        gold_answer=gold_answer if isinstance(gold_answer, str) else None,
        gold_passage_ids=tuple(str(g) for g in gold_ids) if isinstance(gold_ids, list) else None,
    )


def load_eval_records(path: str) -> list[EvalRecord]:
    """Read UTF-8 line-delimited eval records; unknown fields are ignored."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON record: {exc}") from exc
            records.append(eval_record_from_mapping(raw))
    return records


@dataclass
class QuestionResult:
    index: int
    question: str
    answer: str | None = None
    error: str | None = None
    steps: int | None = None
    llm_calls: int | None = None
    exact_match: float | None = None
    f1: float | None = None
    recall_at_k: float | None = None
    trace_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "question": self.question,
            "answer": self.answer,
            "error": self.error,
            "steps": self.steps,
            "llm_calls": self.llm_calls,
            "exact_match": self.exact_match,
            "f1": self.f1,
            "recall_at_k": self.recall_at_k,
            "trace_path": self.trace_path,
        }


@dataclass
class BatchReport:
    """Per-question results plus aggregates; judge fields are reserved for
    an external grader and stay null here."""

    results: list[QuestionResult] = field(default_factory=list)
    k: int = 10

    def aggregates(self) -> dict:
        def mean(values: list[float]) -> float | None:
            return sum(values) / len(values) if values else None

        ems = [r.exact_match for r in self.results if r.exact_match is not None]
        f1s = [r.f1 for r in self.results if r.f1 is not None]
        recalls = [r.recall_at_k for r in self.results if r.recall_at_k is not None]
        step_hist: dict[str, int] = {}
        call_hist: dict[str, int] = {}
        for r in self.results:
            if r.steps is not None:
                step_hist[str(r.steps)] = step_hist.get(str(r.steps), 0) + 1
            if r.llm_calls is not None:
                call_hist[str(r.llm_calls)] = call_hist.get(str(r.llm_calls), 0) + 1
        return {
            "questions": len(self.results),
            "failures": sum(1 for r in self.results if r.error is not None),
            "mean_exact_match": mean(ems),
            "mean_f1": mean(f1s),
            f"mean_recall_at_{self.k}": mean(recalls),
            "step_histogram": step_hist,
            "llm_call_histogram": call_hist,
            "judge": {"correctness": None, "faithfulness": None},
        }

    def to_dict(self) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "aggregates": self.aggregates(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def _apply_metrics(result: QuestionResult, record: EvalRecord, answer: str | None,
                   passage_memory: Sequence[str], k: int) -> None:
    if answer is not None and record.gold_answer is not None:
        result.exact_match = exact_match(answer, record.gold_answer)
        result.f1 = token_f1(answer, record.gold_answer)
    if record.gold_passage_ids:
        result.recall_at_k = recall_at_k(passage_memory, record.gold_passage_ids, k)


def result_from_trace_dict(
    index: int, record: EvalRecord, trace: Mapping[str, object], k: int
) -> QuestionResult:
    """Rebuild a QuestionResult from a persisted trace document."""
    result = QuestionResult(index=index, question=record.question)
    error = trace.get("error")
    result.error = str(error) if error else None
    answer = trace.get("answer") if result.error is None else None
    result.answer = answer if isinstance(answer, str) else None
    result.steps = len(trace.get("steps") or [])
    result.llm_calls = int(trace.get("llm_calls") or 0)
    _apply_metrics(result, record, result.answer, list(trace.get("passage_memory") or []), k)
    return result


def rebuild_report(
    records: Sequence[EvalRecord],
    trace_dicts: Sequence[Mapping[str, object]],
    k: int = 10,
) -> BatchReport:
    """Recompute a report purely from persisted traces (metrics are pure)."""
    if len(records) != len(trace_dicts):
        raise ValueError("records and traces must align one-to-one")
    report = BatchReport(k=k)
    for i, (record, trace) in enumerate(zip(records, trace_dicts)):
        report.results.append(result_from_trace_dict(i, record, trace, k))
    return report


def run_batch(
    records: Sequence[EvalRecord],
    corpus: CorpusIndex,
    kg: KgStore,
    llm: LlmClient,
    options: PipelineOptions | None = None,
    *,
    trace_dir: str | None = None,
    max_workers: int = 1,
) -> BatchReport:
    """Run every question through the pipeline and aggregate metrics.

    A failing question is recorded (with its partial trace when one exists)
    and the batch continues. Results are assembled in question order
    regardless of worker scheduling.
    """
    opts = options or PipelineOptions()
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)

    def run_one(index: int) -> QuestionResult:
        record = records[index]
        result = QuestionResult(index=index, question=record.question)
        trace: PipelineTrace | None = None
        try:
            trace = run_pipeline(record.question, corpus, kg, llm, opts)
            result.answer = trace.answer
        except PipelineRunError as exc:
            trace = exc.trace
            result.error = str(exc)
            logger.warning("question %d aborted: %s", index, exc)
        except Exception as exc:  # noqa: BLE001 - record and continue
            result.error = str(exc)
            logger.warning("question %d failed: %s", index, exc)
        if trace is not None:
            result.steps = len(trace.steps)
            result.llm_calls = trace.llm_calls
            _apply_metrics(result, record, result.answer, trace.passage_memory, opts.k)
            if trace_dir is not None:
                path = str(Path(trace_dir) / f"q{index:04d}.json")
                trace.save(path)
                result.trace_path = path
        return result

    indices = range(len(records))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run_one, indices))
    else:
        results = [run_one(i) for i in indices]
    report = BatchReport(k=opts.k)
    report.results = sorted(results, key=lambda r: r.index)
    return report
