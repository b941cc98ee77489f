"""Tokenizing and sentence splitting shared by the embedder, the lexical
reranker and the question generators."""

import re
from typing import List, Tuple

# Bump when the list below changes. Recorded in every report snapshot.
STOPWORDS_VERSION = "1"

STOPWORDS = frozenset(
    [
        "a",
        "about",
        "above",
        "after",
        "again",
        "against",
        "all",
        "am",
        "an",
        "and",
        "any",
        "are",
        "as",
        "at",
        "be",
        "because",
        "been",
        "before",
        "being",
        "below",
        "between",
        "both",
        "but",
        "by",
        "can",
        "could",
        "did",
        "do",
        "does",
        "doing",
        "down",
        "during",
        "each",
        "few",
        "for",
        "from",
        "further",
        "had",
        "has",
        "have",
        "having",
        "he",
        "her",
        "here",
        "hers",
        "herself",
        "him",
        "himself",
        "his",
        "how",
        "i",
        "if",
        "in",
        "into",
        "is",
        "it",
        "its",
        "itself",
        "just",
        "me",
        "more",
        "most",
        "my",
        "myself",
        "no",
        "nor",
        "not",
        "now",
        "of",
        "off",
        "on",
        "once",
        "only",
        "or",
        "other",
        "our",
        "ours",
        "ourselves",
        "out",
        "over",
        "own",
        "same",
        "she",
        "should",
        "so",
        "some",
        "such",
        "than",
        "that",
        "the",
        "their",
        "theirs",
        "them",
        "themselves",
        "then",
        "there",
        "these",
        "they",
        "this",
        "those",
        "through",
        "to",
        "too",
        "under",
        "until",
        "up",
        "very",
        "was",
        "we",
        "were",
        "what",
        "when",
        "where",
        "which",
        "while",
        "who",
        "whom",
        "why",
        "will",
        "with",
        "would",
        "you",
        "your",
        "yours",
        "yourself",
    ]
)

_TOKEN_PATTERN = re.compile(r"[^\W_]+")
_SENTENCE_END = re.compile(r"[.!?]+\s+")


def tokenize(text: str) -> List[str]:
    """
    Lowercases the text and splits it on runs of non-alphanumeric characters.
    Args:
        text (str): Any text.

    Returns:
        List[str]: Word tokens in order of appearance, repeats included.
    """
    return _TOKEN_PATTERN.findall(text.lower())


def content_tokens(text: str) -> List[str]:
    """Tokens of the text that are not stopwords."""
    return [token for token in tokenize(text) if token not in STOPWORDS]


def split_sentences(text: str) -> List[Tuple[int, int]]:
    """
    Splits text after ".", "!" or "?" followed by whitespace. Abbreviations
    are not special-cased.
    Args:
        text (str): Normalized text.

    Returns:
        List[Tuple[int, int]]: (start, end) character spans of the sentences.
        Spans exclude surrounding whitespace and are never empty.
    """
    spans = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        # Keep the punctuation with the sentence, drop the whitespace
        end = match.start() + len(match.group().rstrip())
        spans.append((start, end))
        start = match.end()
    spans.append((start, len(text)))
    trimmed = []
    for span_start, span_end in spans:
        segment = text[span_start:span_end]
        stripped_start = span_start + (len(segment) - len(segment.lstrip()))
        stripped_end = span_end - (len(segment) - len(segment.rstrip()))
        if stripped_end > stripped_start:
            trimmed.append((stripped_start, stripped_end))
    return trimmed
