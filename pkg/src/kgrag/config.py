"""Engine configuration: YAML/JSON file loading and client construction."""

from __future__ import annotations

import logging
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from .agent import ConfigurationError, PipelineOptions
from .llm import HttpChatClient, LlmClient, MockLlmClient

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RetrievalSettings(_Section):
    k: int = 10
    kappa: float = 60.0
    k_pool: int | None = None
    dense_dim: int = 512
    bm25_k1: float = 1.2
    bm25_b: float = 0.75


class ExpansionSettings(_Section):
    beam_width: int = 4
    max_depth: int = 2


class AgentSettings(_Section):
    max_steps: int = 2
    reader_passage_cap: int = 10
    answer_passage_cap: int = 10
    min_link_score: float | None = None
    step_max_tokens: int = 512
    answer_max_tokens: int = 1024


class LlmSettings(_Section):
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "KGRAG_API_KEY"
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_inflight: int = 4
    mock_script: str | None = None


class KgSettings(_Section):
    literal_filter: bool = True


class PathSettings(_Section):
    index_path: str | None = None
    kg_path: str | None = None
    trace_dir: str | None = None


class EngineConfig(_Section):
    retrieval: RetrievalSettings = RetrievalSettings()
    expansion: ExpansionSettings = ExpansionSettings()
    agent: AgentSettings = AgentSettings()
    llm: LlmSettings = LlmSettings()
    kg: KgSettings = KgSettings()
    paths: PathSettings = PathSettings()

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        """Load a config file; YAML and JSON both parse here."""
        try:
            raw = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
        data = yaml.safe_load(raw)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: config root must be a mapping")
        try:
            return cls(**data)
        except ValidationError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc

    def pipeline_options(self) -> PipelineOptions:
        return PipelineOptions(
            k=self.retrieval.k,
            kappa=self.retrieval.kappa,
            k_pool=self.retrieval.k_pool,
            beam_width=self.expansion.beam_width,
            max_depth=self.expansion.max_depth,
            max_steps=self.agent.max_steps,
            reader_passage_cap=self.agent.reader_passage_cap,
            answer_passage_cap=self.agent.answer_passage_cap,
            min_link_score=self.agent.min_link_score,
            step_max_tokens=self.agent.step_max_tokens,
            answer_max_tokens=self.agent.answer_max_tokens,
        )

    def build_llm_client(self) -> LlmClient:
        """Mock client when a script is configured, HTTP backend otherwise."""
        if self.llm.mock_script:
            return MockLlmClient.from_file(self.llm.mock_script)
        if self.llm.endpoint and self.llm.model:
            return HttpChatClient(
                self.llm.endpoint,
                self.llm.model,
                api_key_env=self.llm.api_key_env,
                timeout=self.llm.timeout,
                max_retries=self.llm.max_retries,
                backoff_base=self.llm.backoff_base,
                max_inflight=self.llm.max_inflight,
            )
        raise ConfigurationError(
            "no LLM backend configured: set llm.mock_script, or llm.endpoint and llm.model"
        )
