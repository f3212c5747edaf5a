"""kgrag: hybrid retrieval with KG triple expansion behind an agentic loop."""

from .agent import (
    AgentState,
    ConfigurationError,
    PipelineOptions,
    PipelineRunError,
    PipelineTrace,
    run_pipeline,
)
from .config import EngineConfig
from .expansion import Beam, ExpansionConfig, expand_beams, flatten_beams
from .kg import KgStore, Triple, align_triple_to_chunk, link_triple, load_kg, verbalize_triple
from .llm import HttpChatClient, LlmClient, LlmRequest, LlmResponse, MockLlmClient
from .retrieval import (
    CorpusIndex,
    Passage,
    dense_search,
    hybrid_search,
    ingest_corpus,
    load_index,
    rrf_fuse,
    save_index,
    sparse_search,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "Beam",
    "ConfigurationError",
    "CorpusIndex",
    "EngineConfig",
    "ExpansionConfig",
    "HttpChatClient",
    "KgStore",
    "LlmClient",
    "LlmRequest",
    "LlmResponse",
    "MockLlmClient",
    "Passage",
    "PipelineOptions",
    "PipelineRunError",
    "PipelineTrace",
    "Triple",
    "align_triple_to_chunk",
    "dense_search",
    "expand_beams",
    "flatten_beams",
    "hybrid_search",
    "ingest_corpus",
    "link_triple",
    "load_index",
    "load_kg",
    "rrf_fuse",
    "run_pipeline",
    "save_index",
    "sparse_search",
    "verbalize_triple",
    "__version__",
]
