"""Cleaning, normalization and de-identification of raw transcripts."""

import re
import unicodedata
from dataclasses import dataclass
from typing import Tuple

from retrieval_bench.readers.transcript_readers import RawDocument

NORMALIZATION_FORM = "NFC"

EMAIL_TOKEN = "[EMAIL]"
PHONE_TOKEN = "[PHONE]"

_EMAIL_PATTERN = re.compile(
    r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}"
)
_PHONE_PATTERN = re.compile(
    r"(?<![\w+])(?:\+?1[-. ]?)?(?:\(\d{3}\) ?|\d{3}[-. ])\d{3}[-. ]\d{4}(?!\w)"
)
_SPACE_RUN = re.compile(r" {2,}")
_NEWLINE_RUN = re.compile(r"\n{3,}")


@dataclass(frozen=True)
class CleanDocument:
    """A normalized document, ready to be chunked."""

    doc_id: str
    text: str
    redaction_count: int = 0


def _drop_control_characters(text: str) -> str:
    """Remove every Cc character except newline"""
    return "".join(
        c for c in text if c == "\n" or unicodedata.category(c) != "Cc"
    )


def redact(text: str) -> Tuple[str, int]:
    """
    Replace email addresses and North-American phone numbers with the
    [EMAIL] and [PHONE] tokens.
    Args:
        text (str): Text to de-identify.

    Returns:
        Tuple[str, int]: The redacted text and the number of replacements.
    """
    total = 0
    # A replacement can expose a match its neighbor blocked, so repeat
    # until nothing changes.
    while True:
        text, n_emails = _EMAIL_PATTERN.subn(EMAIL_TOKEN, text)
        text, n_phones = _PHONE_PATTERN.subn(PHONE_TOKEN, text)
        if n_emails + n_phones == 0:
            return text, total
        total += n_emails + n_phones


def clean_text(text: str) -> str:
    """
    Normalize text without redaction. Steps run in an order that makes the
    function idempotent: line endings, tabs, control characters, Unicode
    composition, space runs, newline runs, trim.
    Args:
        text (str): Valid unicode text.

    Returns:
        str: Normalized text.
    """
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = text.replace("\t", " ")
    text = _drop_control_characters(text)
    text = unicodedata.normalize(NORMALIZATION_FORM, text)
    text = _SPACE_RUN.sub(" ", text)
    text = _NEWLINE_RUN.sub("\n\n", text)
    return text.strip()


def normalize_text(doc: RawDocument, redact_pii: bool = True) -> CleanDocument:
    """
    Clean a raw document and optionally de-identify it.
    Args:
        doc (RawDocument): Document as loaded from disk.
        redact_pii (bool): Replace emails and phone numbers. Defaults to True.

    Returns:
        CleanDocument: Normalized document with its redaction count.
    """
    text = clean_text(doc.text)
    redaction_count = 0
    if redact_pii:
        text, redaction_count = redact(text)
    return CleanDocument(
        doc_id=doc.doc_id, text=text, redaction_count=redaction_count
    )
