"""Token counting for chunk budgeting.

Two counters are registered by default:

* ``cl100k_base-compatible`` — a byte-pair-encoding counter using the
  cl100k_base merge ranks (vendored, gzip-compressed). Counts match the
  reference encoder for that vocabulary.
* ``bytes4`` — a deterministic approximation, ceil(utf8_bytes / 4), for
  environments where BPE counting is too slow or the vocabulary data is
  unwanted.
"""

from __future__ import annotations

import base64
import gzip
import importlib.resources
import math
from functools import lru_cache

import regex

__all__ = [
    "UnknownTokenizerError",
    "count_tokens",
    "get_tokenizer",
    "register_tokenizer",
    "DEFAULT_TOKENIZER_ID",
]

DEFAULT_TOKENIZER_ID = "cl100k_base-compatible"

# Pre-tokenizer for cl100k_base: contractions, words with optional leading
# non-letter, 1-3 digit runs, punctuation runs (optionally space-led, eating
# trailing newlines), newline runs, then whitespace.
_CL100K_SPLIT = regex.compile(
    r"'(?i:[sdmt]|ll|ve|re)"
    r"|[^\r\n\p{L}\p{N}]?\p{L}+"
    r"|\p{N}{1,3}"
    r"| ?[^\s\p{L}\p{N}]+[\r\n]*"
    r"|\s*[\r\n]+"
    r"|\s+(?!\S)"
    r"|\s+"
)


class UnknownTokenizerError(KeyError):
    """Raised when a tokenizer id has not been registered."""


class BpeCounter:
    """Byte-pair-encoding token counter over a rank table."""

    def __init__(self, ranks: dict[bytes, int], tokenizer_id: str):
        self.tokenizer_id = tokenizer_id
        self._ranks = ranks
        self._parts = lru_cache(maxsize=None)(self._merge)

    def _merge(self, piece: bytes) -> tuple[bytes, ...]:
        if piece in self._ranks:
            return (piece,)
        parts = [piece[i : i + 1] for i in range(len(piece))]
        ranks = self._ranks
        while len(parts) > 1:
            best_rank = None
            best_i = -1
            for i in range(len(parts) - 1):
                rank = ranks.get(parts[i] + parts[i + 1])
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_i = i
            if best_i < 0:
                break
            parts[best_i : best_i + 2] = [parts[best_i] + parts[best_i + 1]]
        return tuple(parts)

    def count(self, text: str) -> int:
        total = 0
        for match in _CL100K_SPLIT.finditer(text):
            total += len(self._parts(match.group().encode("utf-8")))
        return total

    def encode(self, text: str) -> list[int]:
        """Token ids; unknown byte sequences cannot occur (all bytes ranked)."""
        ids: list[int] = []
        for match in _CL100K_SPLIT.finditer(text):
            for part in self._parts(match.group().encode("utf-8")):
                ids.append(self._ranks[part])
        return ids

    def split_at_token_limit(self, text: str, max_tokens: int) -> tuple[str, str]:
        """Split ``text`` at the greatest token boundary whose head stays
        within ``max_tokens`` tokens and lands on a character boundary.

        The head is guaranteed non-empty when the text is non-empty.
        """
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        boundaries = self._char_boundaries(text)
        # boundaries[k] = char offset after k tokens (char-aligned only)
        k = min(max_tokens, len(boundaries) - 1)
        while k > 0:
            head = text[: boundaries[k]]
            if boundaries[k] > 0 and self.count(head) <= max_tokens:
                return head, text[boundaries[k] :]
            k -= 1
        # Degenerate: no usable boundary; take one character.
        return text[:1], text[1:]

    def _char_boundaries(self, text: str) -> list[int]:
        # Char offsets at successive token boundaries; non-char-aligned token
        # boundaries repeat the previous aligned offset so indexing by token
        # count stays meaningful.
        offsets = [0]
        char_pos = 0
        for match in _CL100K_SPLIT.finditer(text):
            piece = match.group()
            piece_bytes = piece.encode("utf-8")
            # byte offset -> char offset map for this piece
            byte_to_char = {0: 0}
            acc = 0
            for i, ch in enumerate(piece):
                acc += len(ch.encode("utf-8"))
                byte_to_char[acc] = i + 1
            byte_pos = 0
            for part in self._parts(piece_bytes):
                byte_pos += len(part)
                char_in_piece = byte_to_char.get(byte_pos)
                if char_in_piece is None:
                    offsets.append(offsets[-1])
                else:
                    offsets.append(char_pos + char_in_piece)
            char_pos += len(piece)
        return offsets


class ByteEstimator:
    """ceil(bytes/4) approximation; exactly determined by the byte count."""

    def __init__(self, tokenizer_id: str = "bytes4"):
        self.tokenizer_id = tokenizer_id

    def count(self, text: str) -> int:
        return math.ceil(len(text.encode("utf-8")) / 4)

    def split_at_token_limit(self, text: str, max_tokens: int) -> tuple[str, str]:
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        budget = max_tokens * 4
        acc = 0
        cut = 0
        for i, ch in enumerate(text):
            b = len(ch.encode("utf-8"))
            if acc + b > budget:
                break
            acc += b
            cut = i + 1
        cut = max(cut, 1)
        return text[:cut], text[cut:]


def _load_cl100k_ranks() -> dict[bytes, int]:
    data = importlib.resources.files("charannot.data").joinpath(
        "cl100k_base.tiktoken.gz"
    )
    ranks: dict[bytes, int] = {}
    with data.open("rb") as fh:
        for line in gzip.open(fh, "rt", encoding="ascii"):
            token_b64, rank = line.split()
            ranks[base64.b64decode(token_b64)] = int(rank)
    return ranks


_REGISTRY: dict[str, object] = {}


def register_tokenizer(tokenizer_id: str, factory) -> None:
    """Register a counter factory under an id (factory is called lazily)."""
    _REGISTRY[tokenizer_id] = factory


def get_tokenizer(tokenizer_id: str = DEFAULT_TOKENIZER_ID):
    try:
        entry = _REGISTRY[tokenizer_id]
    except KeyError:
        raise UnknownTokenizerError(
            f"unknown tokenizer id {tokenizer_id!r}; "
            f"registered: {sorted(_REGISTRY)}"
        ) from None
    if callable(entry):
        entry = entry()
        _REGISTRY[tokenizer_id] = entry
    return entry


def count_tokens(text: str, tokenizer_id: str = DEFAULT_TOKENIZER_ID) -> int:
    """Deterministic token count of ``text`` under the given counter."""
    return get_tokenizer(tokenizer_id).count(text)


_bpe_singleton = None


def _make_bpe():
    global _bpe_singleton
    if _bpe_singleton is None:
        _bpe_singleton = BpeCounter(_load_cl100k_ranks(), DEFAULT_TOKENIZER_ID)
    return _bpe_singleton


register_tokenizer(DEFAULT_TOKENIZER_ID, _make_bpe)
register_tokenizer("cl100k_base", _make_bpe)
register_tokenizer("bytes4", lambda: ByteEstimator())
