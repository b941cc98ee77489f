"""Typed run configuration. Every variant type is a discriminated union
keyed on "kind", so a yaml block like {kind: hnsw, m: 16} validates into the
matching model."""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)


class ConfigurationError(Exception):
    """Raised for invalid or incomplete run configurations."""

    pass


class _ConfigModel(BaseModel):
    """Rejects unknown keys so typos in a conf file fail loudly."""

    model_config = ConfigDict(extra="forbid")


# Chunking
class RecursiveChunking(_ConfigModel):
    """Split on a separator hierarchy and merge greedily up to max_chars."""

    kind: Literal["recursive"] = "recursive"
    max_chars: int = Field(default=2000, ge=64)


class SemanticChunking(_ConfigModel):
    """Split where sentence embeddings drift apart."""

    kind: Literal["semantic"] = "semantic"
    similarity_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    min_sentences: int = Field(default=2, ge=1)
    max_chars: int = Field(default=2000, ge=64)


ChunkingStrategy = Annotated[
    Union[RecursiveChunking, SemanticChunking], Field(discriminator="kind")
]


# Embedding
class RemoteEmbedderConfig(_ConfigModel):
    """An embedding service speaking {"model", "input"} -> {"data"}."""

    kind: Literal["remote"] = "remote"
    endpoint: Optional[str] = None
    model_name: str
    dim: int = Field(ge=8)
    batch_size: int = Field(default=32, ge=1)
    timeout_ms: int = Field(default=30000, ge=1)
    max_in_flight: int = Field(default=4, ge=1)


class HashProjectionConfig(_ConfigModel):
    """Deterministic bag-of-words random projection. When seed is blank it is
    derived from the run seed."""

    kind: Literal["hash"] = "hash"
    dim: int = Field(default=64, ge=8)
    seed: Optional[int] = None


EmbedderConfig = Annotated[
    Union[RemoteEmbedderConfig, HashProjectionConfig],
    Field(discriminator="kind"),
]


# Indexing
class FlatExactIndexKind(_ConfigModel):
    """Exhaustive inner product scan."""

    kind: Literal["flat"] = "flat"


class HnswIndexKind(_ConfigModel):
    """Layered proximity graph."""

    kind: Literal["hnsw"] = "hnsw"
    m: int = Field(default=32, ge=2)
    ef_construction: int = Field(default=128, ge=1)
    ef_search: int = Field(default=128, ge=1)


class IvfFlatIndexKind(_ConfigModel):
    """k-means cells scanned exhaustively at query time."""

    kind: Literal["ivf"] = "ivf"
    nlist: int = Field(default=1024, ge=1)
    nprobe: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _check_nprobe(self):
        """nprobe can't exceed nlist"""
        if self.nprobe > self.nlist:
            raise ValueError(
                f"nprobe ({self.nprobe}) must be <= nlist ({self.nlist})"
            )
        return self


IndexKind = Annotated[
    Union[FlatExactIndexKind, HnswIndexKind, IvfFlatIndexKind],
    Field(discriminator="kind"),
]


# Reranking
class NoReranker(_ConfigModel):
    """First-stage order is final."""

    kind: Literal["none"] = "none"


class RemoteCrossEncoder(_ConfigModel):
    """A reranking service speaking {"model", "query", "documents"} ->
    {"scores"}."""

    kind: Literal["remote"] = "remote"
    endpoint: Optional[str] = None
    model_name: str
    timeout_ms: int = Field(default=30000, ge=1)
    max_in_flight: int = Field(default=4, ge=1)


class LexicalOverlap(_ConfigModel):
    """Share of distinct query content tokens found in the passage."""

    kind: Literal["lexical"] = "lexical"


RerankerKind = Annotated[
    Union[NoReranker, RemoteCrossEncoder, LexicalOverlap],
    Field(discriminator="kind"),
]


# Question generation
DEFAULT_PROMPT_TEMPLATE = (
    "You are given an excerpt from a meeting transcript.\n"
    "Write one question that this excerpt answers. Reply with the question "
    "only.\n\nExcerpt:\n{chunk}"
)


class RemoteLLMConfig(_ConfigModel):
    """A chat-completion service."""

    kind: Literal["remote"] = "remote"
    endpoint: Optional[str] = None
    model_name: str
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    temperature: float = Field(default=0.2, ge=0.0)
    timeout_ms: int = Field(default=60000, ge=1)
    max_in_flight: int = Field(default=4, ge=1)

    @field_validator("prompt_template")
    @classmethod
    def _has_chunk_placeholder(cls, value: str) -> str:
        """The chunk text has to go somewhere"""
        if "{chunk}" not in value:
            raise ValueError("prompt_template must contain {chunk}")
        return value


class TemplateStubConfig(_ConfigModel):
    """Deterministic "What is discussed regarding ..." questions."""

    kind: Literal["template"] = "template"
    seed: Optional[int] = None


GenConfig = Annotated[
    Union[RemoteLLMConfig, TemplateStubConfig], Field(discriminator="kind")
]


class LoggingConfig(_ConfigModel):
    """Env variable LOG_LEVEL overrides level."""

    level: str = "INFO"
    file: Optional[str] = None


ReportFormat = Literal["json", "md", "csv"]


class RunConfig(_ConfigModel):
    """Everything a run depends on. Serializes to json and back without
    loss."""

    corpus_dir: Path
    output_dir: Path = Path("results")
    include_exts: List[str] = [".txt"]
    redact: bool = True
    chunking: ChunkingStrategy = RecursiveChunking()
    embedder: EmbedderConfig = HashProjectionConfig()
    index: IndexKind = HnswIndexKind()
    reranker: RerankerKind = NoReranker()
    rerank_top_n: int = Field(default=10, ge=1)
    qa: GenConfig = TemplateStubConfig()
    overrides_file: Optional[Path] = None
    k_values: List[int] = [3, 5, 10]
    seed: int = 0
    thresholds: Dict[int, float] = {}
    report_formats: List[ReportFormat] = ["json", "md", "csv"]
    workers: int = Field(default=4, ge=1)
    progress_bar: bool = False
    logging: LoggingConfig = LoggingConfig()

    @field_validator("k_values")
    @classmethod
    def _sorted_positive_k(cls, value: List[int]) -> List[int]:
        """k values are positive, deduplicated and sorted"""
        if not value:
            raise ValueError("k_values can't be empty")
        if any(k < 1 for k in value):
            raise ValueError(f"k_values must be positive, got {value}")
        return sorted(set(value))

    @model_validator(mode="after")
    def _thresholds_use_known_k(self):
        """A threshold on a k that isn't evaluated can never be checked"""
        unknown = sorted(set(self.thresholds) - set(self.k_values))
        if unknown:
            raise ValueError(
                f"thresholds reference k values {unknown} not in k_values "
                f"{self.k_values}"
            )
        for k, value in self.thresholds.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(
                    f"threshold for k={k} must be within [0, 1], got {value}"
                )
        return self
