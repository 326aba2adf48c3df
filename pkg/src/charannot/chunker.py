"""Split a full text into token-budgeted, sentence-aligned chunks.

Default mode packs whole sentences greedily until the token budget is hit,
then prepends the last few sentences of the previous chunk as context for
the next one. A sentence that alone exceeds the budget is hard-split at a
token boundary. Alternatively a custom splitter string divides the text at
every marker occurrence with no overlap.

Stripping each chunk's overlap prefix and concatenating the bodies
reconstructs the input byte-for-byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .model import ChunkMeta, ChunkSet, SchemaError
from .sentences import split_sentences
from .tokens import DEFAULT_TOKENIZER_ID, get_tokenizer

log = logging.getLogger(__name__)


class ChunkingError(ValueError):
    pass


@dataclass(frozen=True)
class ChunkerConfig:
    target_tokens: int = 500
    context_sentences: int = 3
    custom_splitter: str | None = None
    tokenizer_id: str = DEFAULT_TOKENIZER_ID

    def __post_init__(self):
        if self.target_tokens < 1:
            raise SchemaError("target_tokens must be >= 1")
        if self.context_sentences < 0:
            raise SchemaError("context_sentences must be >= 0")
        if self.custom_splitter is not None and not self.custom_splitter:
            raise SchemaError("custom_splitter must be non-empty when set")


def chunk_text(text: str, config: ChunkerConfig | None = None) -> ChunkSet:
    """Chunk ``text`` per the config; see the module docstring for modes."""
    config = config or ChunkerConfig()
    if not text.strip():
        raise ChunkingError("cannot chunk empty or whitespace-only text")
    if config.custom_splitter is not None:
        return _chunk_by_splitter(text, config)
    return _chunk_by_budget(text, config)


def _chunk_by_splitter(text: str, config: ChunkerConfig) -> ChunkSet:
    marker = config.custom_splitter
    if marker not in text:
        log.warning(
            "custom splitter %r not found in text; emitting a single chunk", marker
        )
        segments = [text]
    else:
        segments = [seg for seg in text.split(marker) if seg.strip()]
        if not segments:
            raise ChunkingError("splitting left no non-empty segments")
    chunks = {i: seg for i, seg in enumerate(segments, start=1)}
    meta = ChunkMeta(
        target_tokens=config.target_tokens,
        tokenizer_id=config.tokenizer_id,
        context_sentences=config.context_sentences,
        custom_splitter=marker,
        overlap_prefix_bytes={i: 0 for i in chunks},
    )
    return ChunkSet(chunks=chunks, meta=meta)


def _chunk_by_budget(text: str, config: ChunkerConfig) -> ChunkSet:
    tok = get_tokenizer(config.tokenizer_id)
    target = config.target_tokens

    bodies: list[str] = []
    current = ""
    for start, end in split_sentences(text):
        sentence = text[start:end]
        if tok.count(sentence) > target:
            if current:
                bodies.append(current)
                current = ""
            rest = sentence
            while tok.count(rest) > target:
                head, rest = tok.split_at_token_limit(rest, target)
                bodies.append(head)
            current = rest
        elif not current:
            current = sentence
        elif tok.count(current + sentence) <= target:
            current = current + sentence
        else:
            bodies.append(current)
            current = sentence
    if current:
        bodies.append(current)

    chunks: dict[int, str] = {}
    prefix_bytes: dict[int, int] = {}
    prev_body: str | None = None
    for i, body in enumerate(bodies, start=1):
        if i == 1 or config.context_sentences == 0:
            chunks[i] = body
            prefix_bytes[i] = 0
        else:
            prefix = _tail_sentences(prev_body, config.context_sentences)
            chunks[i] = prefix + body
            prefix_bytes[i] = len(prefix.encode("utf-8"))
        prev_body = body

    meta = ChunkMeta(
        target_tokens=target,
        tokenizer_id=config.tokenizer_id,
        context_sentences=config.context_sentences,
        custom_splitter=None,
        overlap_prefix_bytes=prefix_bytes,
    )
    return ChunkSet(chunks=chunks, meta=meta)


def _tail_sentences(body: str, count: int) -> str:
    spans = split_sentences(body)
    take = min(count, len(spans))
    if take == 0:
        return ""
    return body[spans[-take][0] :]


def reconstruct_text(chunkset: ChunkSet) -> str:
    """Concatenate chunk bodies (overlap prefixes stripped)."""
    if chunkset.meta.custom_splitter is not None:
        raise ChunkingError(
            "reconstruction is undefined for splitter-mode chunk sets "
            "(marker strings were removed)"
        )
    return "".join(chunkset.body(i) for i in chunkset.chunks)


def infer_overlap_prefixes(chunks: dict[int, str], context_sentences: int) -> dict[int, int]:
    """Recompute per-chunk overlap byte lengths for a bare chunk mapping.

    Chunk files on disk carry no metadata; the overlap rule (last
    ``context_sentences`` sentences of the previous body) is deterministic,
    so prefixes can be recovered. A chunk that does not start with the
    expected prefix (e.g. splitter-mode output) gets prefix 0.
    """
    prefix_bytes: dict[int, int] = {}
    prev_body: str | None = None
    for idx in sorted(chunks):
        text = chunks[idx]
        if prev_body is None or context_sentences == 0:
            prefix_bytes[idx] = 0
            body = text
        else:
            prefix = _tail_sentences(prev_body, context_sentences)
            if prefix and text.startswith(prefix):
                prefix_bytes[idx] = len(prefix.encode("utf-8"))
                body = text[len(prefix) :]
            else:
                prefix_bytes[idx] = 0
                body = text
        prev_body = body
    return prefix_bytes
