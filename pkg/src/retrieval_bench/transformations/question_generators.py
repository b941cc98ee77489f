"""Synthesizes the evaluation set: one question per chunk, followed by
automated quality checks and optional manual review overrides."""

import logging
from abc import ABC, abstractmethod
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from retrieval_bench.config_loader.run_configuration import (
    ConfigurationError,
    RemoteLLMConfig,
    TemplateStubConfig,
)
from retrieval_bench.transformations.chunkers import Chunk
from retrieval_bench.util.http_utils import JsonServiceClient, ProviderError
from retrieval_bench.util.text_utils import content_tokens, tokenize

MIN_QUESTION_CHARS = 10
MAX_QUESTION_CHARS = 300

GENERATION_ERROR = "generation_error"
EMPTY_COMPLETION = "empty_completion"
MANUAL_DROP = "manual_drop"


@dataclass(frozen=True)
class QueryChunkPair:
    """A question bound to the chunk it was generated from. Filtered pairs
    are kept in the dataset but left out of evaluation."""

    query_id: str
    chunk_id: str
    query_text: str
    generator: str
    filtered: bool = False
    filter_reason: Optional[str] = None


@dataclass(frozen=True)
class FilterResult:
    """Outcome of quality_filter. reason names the first failed rule."""

    passed: bool
    reason: Optional[str] = None


@dataclass(frozen=True)
class DatasetSummary:
    """Counts reported alongside the metrics"""

    generated: int
    filtered: int
    retained: int

    @classmethod
    def from_pairs(cls, pairs: Sequence[QueryChunkPair]) -> "DatasetSummary":
        """Recount a list of pairs"""
        generated = sum(
            1
            for p in pairs
            if p.filter_reason not in (GENERATION_ERROR, EMPTY_COMPLETION)
        )
        filtered = sum(1 for p in pairs if p.filtered)
        return cls(
            generated=generated,
            filtered=filtered,
            retained=len(pairs) - filtered,
        )


def make_query_id(chunk_id: str) -> str:
    """One query per chunk, so the chunk id identifies the query"""
    return f"q-{chunk_id}"


def quality_filter(question: str, chunk: Chunk) -> FilterResult:
    """
    Automated checks on a generated question.
    Args:
        question (str): Generated question.
        chunk (Chunk): Chunk the question was generated from.

    Returns:
        FilterResult: Fails with "too_short", "too_long", "no_question_mark"
        or "no_overlap", whichever rule is violated first.
    """
    if len(question) < MIN_QUESTION_CHARS:
        return FilterResult(False, "too_short")
    if len(question) > MAX_QUESTION_CHARS:
        return FilterResult(False, "too_long")
    if not question.endswith("?"):
        return FilterResult(False, "no_question_mark")
    chunk_tokens = set(tokenize(chunk.text))
    if not any(token in chunk_tokens for token in content_tokens(question)):
        return FilterResult(False, "no_overlap")
    return FilterResult(True)


class QuestionGenerator(ABC):
    """Produces one question for a chunk."""

    @property
    @abstractmethod
    def tag(self) -> str:
        """Provider/model tag stored with every pair"""

    @abstractmethod
    def generate_question(self, chunk: Chunk) -> str:
        """The question, or an empty string when nothing usable came back"""


class TemplateStubGenerator(QuestionGenerator):
    """Builds "What is discussed regarding {t1} and {t2}?" from the two most
    frequent non-stopword tokens of the chunk, ties broken alphabetically."""

    def __init__(self, seed: int = 0) -> None:
        """
        Parameters
        ----------
        seed : int
          Recorded in the tag. The template itself uses no randomness.
        """
        self.seed = seed

    @property
    def tag(self) -> str:
        """Provider/model tag stored with every pair"""
        return "template-stub"

    def generate_question(self, chunk: Chunk) -> str:
        """Deterministic question from token frequencies"""
        counts = Counter(content_tokens(chunk.text))
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        if not ranked:
            return ""
        if len(ranked) == 1:
            return f"What is discussed regarding {ranked[0][0]}?"
        return (
            f"What is discussed regarding {ranked[0][0]} and {ranked[1][0]}?"
        )


class RemoteLLMGenerator(QuestionGenerator):
    """Client for a chat-completion service. The chunk text replaces
    {chunk} in the prompt template and the first line of the trimmed
    completion is the question."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        prompt_template: str,
        temperature: float = 0.2,
        timeout_ms: int = 60000,
        api_token: Optional[str] = None,
    ) -> None:
        """
        Parameters
        ----------
        endpoint : str
          Url the requests are posted to.
        model_name : str
          Sent as "model".
        prompt_template : str
          Must contain {chunk}.
        temperature : float
          Sampling temperature. Defaults to 0.2.
        timeout_ms : int
          Per request timeout. Defaults to 60000.
        api_token : Optional[str]
          Bearer token, if the service needs one.
        """
        if "{chunk}" not in prompt_template:
            raise ConfigurationError("prompt_template must contain {chunk}")
        self.model_name = model_name
        self.prompt_template = prompt_template
        self.temperature = temperature
        self._client = JsonServiceClient(
            endpoint=endpoint, timeout_ms=timeout_ms, api_token=api_token
        )

    @property
    def tag(self) -> str:
        """Provider/model tag stored with every pair"""
        return f"remote:{self.model_name}"

    def generate_question(self, chunk: Chunk) -> str:
        """Request one completion. Raises ProviderError on failure."""
        # str.replace, so braces in the chunk text are left alone
        prompt = self.prompt_template.replace("{chunk}", chunk.text)
        response = self._client.post_json(
            {
                "model": self.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
            }
        )
        try:
            content = response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(
                f"Malformed completion for chunk {chunk.chunk_id}: {e}"
            ) from e
        lines = (content or "").strip().splitlines()
        return lines[0].strip() if lines else ""


def create_question_generator(
    config: Union[RemoteLLMConfig, TemplateStubConfig],
    seed: int = 0,
    api_token: Optional[str] = None,
) -> QuestionGenerator:
    """
    Build the generator a configuration describes.
    Args:
        config: Generator configuration.
        seed (int): Used when config.seed is blank for the template stub.
        api_token (Optional[str]): Bearer token for remote services.

    Returns:
        QuestionGenerator
    """
    if isinstance(config, TemplateStubConfig):
        return TemplateStubGenerator(
            seed=config.seed if config.seed is not None else seed
        )
    if not config.endpoint:
        raise ConfigurationError(
            f"No endpoint configured for question model {config.model_name}"
        )
    return RemoteLLMGenerator(
        endpoint=config.endpoint,
        model_name=config.model_name,
        prompt_template=config.prompt_template,
        temperature=config.temperature,
        timeout_ms=config.timeout_ms,
        api_token=api_token,
    )


def _pair_for_chunk(
    generator: QuestionGenerator, chunk: Chunk
) -> QueryChunkPair:
    """Generate and filter one question. Failures become filtered pairs."""
    query_id = make_query_id(chunk.chunk_id)
    try:
        question = generator.generate_question(chunk)
    except ProviderError as e:
        logging.warning(f"No question for chunk {chunk.chunk_id}: {e}")
        return QueryChunkPair(
            query_id, chunk.chunk_id, "", generator.tag, True, GENERATION_ERROR
        )
    if not question:
        return QueryChunkPair(
            query_id, chunk.chunk_id, "", generator.tag, True, EMPTY_COMPLETION
        )
    result = quality_filter(question, chunk)
    return QueryChunkPair(
        query_id=query_id,
        chunk_id=chunk.chunk_id,
        query_text=question,
        generator=generator.tag,
        filtered=not result.passed,
        filter_reason=result.reason,
    )


def build_dataset(
    generator: QuestionGenerator,
    chunks: Sequence[Chunk],
    max_in_flight: int = 1,
    progress_bar: bool = False,
) -> Tuple[List[QueryChunkPair], DatasetSummary]:
    """
    Attempt one question per chunk.
    Args:
        generator (QuestionGenerator): Question source.
        chunks (Sequence[Chunk]): Chunks with unique ids.
        max_in_flight (int): Concurrent generations. Output order is chunk
          order regardless.
        progress_bar (bool): Show a tqdm bar.

    Returns:
        Tuple[List[QueryChunkPair], DatasetSummary]: Pairs in chunk order and
        their counts.
    """
    chunk_ids = [chunk.chunk_id for chunk in chunks]
    if len(set(chunk_ids)) != len(chunk_ids):
        raise ValueError("Chunk ids must be unique to build a dataset")
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as executor:
        pairs = list(
            tqdm(
                executor.map(
                    lambda chunk: _pair_for_chunk(generator, chunk), chunks
                ),
                total=len(chunks),
                desc="Generating questions",
                disable=not progress_bar,
            )
        )
    summary = DatasetSummary.from_pairs(pairs)
    logging.info(
        f"Questions generated: {summary.generated}, filtered: "
        f"{summary.filtered}, retained: {summary.retained}"
    )
    return pairs, summary


def apply_overrides(
    pairs: Sequence[QueryChunkPair], overrides: Dict[str, str]
) -> List[QueryChunkPair]:
    """
    Apply manual review decisions.
    Args:
        pairs (Sequence[QueryChunkPair]): Automatically filtered pairs.
        overrides (Dict[str, str]): query_id -> "keep" or "drop".

    Returns:
        List[QueryChunkPair]: Pairs with their filtered flag updated. A keep
        can't revive a pair without question text.
    """
    known = {pair.query_id for pair in pairs}
    unknown = sorted(set(overrides) - known)
    if unknown:
        logging.warning(f"Overrides for unknown queries ignored: {unknown}")
    updated = []
    for pair in pairs:
        decision = overrides.get(pair.query_id)
        if decision == "drop":
            pair = replace(pair, filtered=True, filter_reason=MANUAL_DROP)
        elif decision == "keep":
            if pair.query_text:
                pair = replace(pair, filtered=False, filter_reason=None)
            else:
                logging.warning(
                    f"Can't keep {pair.query_id}: it has no question text"
                )
        updated.append(pair)
    return updated


def retained_pairs(pairs: Sequence[QueryChunkPair]) -> List[QueryChunkPair]:
    """Pairs that take part in evaluation"""
    return [pair for pair in pairs if not pair.filtered]
