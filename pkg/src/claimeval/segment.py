"""Sentence segmentation and inline citation markers.

Citation markers are ``[<digits>]``; runs such as ``[21][22][23]`` are allowed
anywhere in a sentence. Markers that trail a sentence terminator
(``"Stable. [4]"``) stay with the sentence they follow.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Sequence

logger = logging.getLogger(__name__)

MARKER_RE = re.compile(r"\[(\d+)\]")
_MARKER_RUN_RE = re.compile(r"[ \t]*(?:\[\d+\])+")
_TRAILING_MARKERS_RE = re.compile(r"(?:\s*\[\d+\])*")
_BULLET_RE = re.compile(r"^(?:[•\-*]|\d+\.)(?=\s|$)")
_SPACE_BEFORE_PUNCT_RE = re.compile(r"\s+([.,;:!?])")
TERMINATORS = ".!?"


@dataclass(frozen=True)
class Segment:
    text: str
    start: int
    end: int
    is_heading: bool = False
    is_bullet: bool = False


@dataclass(frozen=True)
class CitedSentence:
    clean_text: str
    citations: tuple[int, ...]
    char_span: tuple[int, int]
    is_heading: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "citations", tuple(self.citations))


def _line_spans(text: str):
    start = 0
    for line in text.splitlines(keepends=True):
        yield start, line.rstrip("\r\n")
        start += len(line)


def _split_line(line: str) -> list[tuple[int, int]]:
    """Split one line at sentence terminators; returns (start, end) offsets."""
    spans = []
    seg_start = 0
    i = 0
    n = len(line)
    bullet = _BULLET_RE.match(line.lstrip())
    if bullet:
        # an enumerator like "1." is part of the line, never a terminator
        i = len(line) - len(line.lstrip()) + bullet.end()
    while i < n:
        if line[i] not in TERMINATORS:
            i += 1
            continue
        j = i + 1
        while j < n and line[j] in TERMINATORS:
            j += 1
        k = j
        while k < n and line[k].isspace():
            k += 1
        if line[i] == "." and k > j and k < n and line[k].islower():
            i = j
            continue
        j = _TRAILING_MARKERS_RE.match(line, j).end()
        if j < n and not line[j].isspace():
            i = j
            continue
        spans.append((seg_start, j))
        seg_start = j
        i = j
    spans.append((seg_start, n))
    return spans


def segment_text(text: str) -> list[Segment]:
    """Segment ``text`` into sentences, bullet lines and headings.

    Every newline ends a segment. A line with no terminal punctuation, no
    bullet glyph and no citation marker is a heading.
    """
    segments = []
    for offset, line in _line_spans(text):
        if not line.strip():
            continue
        stripped = line.strip()
        is_bullet = bool(_BULLET_RE.match(stripped))
        pieces = []
        for a, b in _split_line(line):
            piece = line[a:b]
            if not piece.strip():
                continue
            lead = len(piece) - len(piece.lstrip())
            trail = len(piece.rstrip())
            pieces.append((offset + a + lead, offset + a + trail))
        single = len(pieces) == 1
        for idx, (a, b) in enumerate(pieces):
            seg = text[a:b]
            heading = (
                single
                and not is_bullet
                and not MARKER_RE.search(seg)
                and seg.rstrip()[-1] not in TERMINATORS
            )
            segments.append(Segment(seg, a, b, is_heading=heading, is_bullet=is_bullet and idx == 0))
    return segments


def split_sentences(text: str) -> list[str]:
    return [s.text for s in segment_text(text)]


def strip_citations(text: str) -> str:
    """Remove citation markers and tidy the whitespace they leave behind."""
    prev = None
    while prev != text:
        prev = text
        text = _MARKER_RUN_RE.sub("", text)
        text = MARKER_RE.sub("", text)
    text = _SPACE_BEFORE_PUNCT_RE.sub(r"\1", text)
    lines = [" ".join(line.split()) for line in text.splitlines()]
    return "\n".join(line for line in lines if line).strip()


def _citations_in(text: str) -> tuple[int, ...]:
    seen: dict[int, None] = {}
    prev = None
    while prev != text:
        prev = text
        for m in MARKER_RE.finditer(text):
            seen.setdefault(int(m.group(1)), None)
        text = MARKER_RE.sub("", text)
    return tuple(seen)


def parse_citations(sentence: str, span: tuple[int, int] | None = None,
                    is_heading: bool = False) -> CitedSentence:
    """Extract ordered, de-duplicated citation numbers and the marker-free text."""
    return CitedSentence(
        clean_text=strip_citations(sentence),
        citations=_citations_in(sentence),
        char_span=span if span is not None else (0, len(sentence)),
        is_heading=is_heading,
    )


def cite_sentences(text: str) -> list[CitedSentence]:
    return [parse_citations(s.text, (s.start, s.end), s.is_heading) for s in segment_text(text)]


def render_numbered_input(units: Sequence[str], indices: Sequence[int] | None = None) -> str:
    """Render units one per line as ``[i] text``.

    ``indices`` overrides the numbering, which lets a subset of units keep
    their original citation numbers.
    """
    if not units:
        raise ValueError("cannot render an empty unit list")
    if indices is None:
        indices = range(len(units))
    elif len(indices) != len(units):
        raise ValueError("indices and units differ in length")
    return "\n".join(f"[{i}] {u}" for i, u in zip(indices, units))


def out_of_range_citations(sentences: Sequence[CitedSentence], n_units: int) -> list[int]:
    """Citation numbers with no matching input unit, in order of first use."""
    bad: dict[int, None] = {}
    for s in sentences:
        for c in s.citations:
            if not 0 <= c < n_units:
                bad.setdefault(c, None)
    return list(bad)


def validate_citations(sentences: Sequence[CitedSentence], n_units: int,
                       where: str = "") -> list[str]:
    """Return (and log) one warning per out-of-range citation number."""
    warnings = []
    for c in out_of_range_citations(sentences, n_units):
        msg = f"{where + ': ' if where else ''}citation [{c}] has no input unit (0..{n_units - 1})"
        logger.warning(msg)
        warnings.append(msg)
    return warnings
