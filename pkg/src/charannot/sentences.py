"""Lightweight sentence segmentation for chunk alignment.

A sentence ends at '.', '!', or '?' (optionally followed by closing quotes
or brackets) when whitespace or end-of-text follows. A handful of honorific
abbreviations are exempt so that period-dense fiction does not over-split.
Spans are contiguous character ranges covering the whole text; a trailing
fragment without a terminator is one span.
"""

from __future__ import annotations

import re

TERMINATORS = ".!?"
CLOSERS = "\"'”’)]»"

# Honorifics whose trailing period does not end a sentence.
ABBREVIATIONS = ("Mr", "Mrs", "Dr", "St")

_TERMINATOR_RE = re.compile(r"[.!?]")
_WORD_BEFORE_RE = re.compile(r"([A-Za-z]+)$")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character-offset spans of the sentences in ``text``."""
    if not text:
        return []
    cut_points: list[int] = []
    n = len(text)
    for match in _TERMINATOR_RE.finditer(text):
        pos = match.start()
        if text[pos] == "." and _is_abbreviation(text, pos):
            continue
        end = pos + 1
        while end < n and text[end] in CLOSERS:
            end += 1
        if end >= n or text[end].isspace():
            cut_points.append(end)

    spans: list[tuple[int, int]] = []
    start = 0
    for cut in cut_points:
        spans.append((start, cut))
        start = cut
    if start < n:
        if spans and not text[start:].strip():
            # fold trailing whitespace into the final sentence
            spans[-1] = (spans[-1][0], n)
        else:
            spans.append((start, n))
    return spans


def sentence_texts(text: str) -> list[str]:
    return [text[a:b] for a, b in split_sentences(text)]


def _is_abbreviation(text: str, period_pos: int) -> bool:
    window_start = max(0, period_pos - 8)
    match = _WORD_BEFORE_RE.search(text, window_start, period_pos)
    return bool(match) and match.group(1) in ABBREVIATIONS
