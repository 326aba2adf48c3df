"""Numerical character representations from annotation profiles.

A character's profile text (name, trait counts, then all action texts in
chunk order) feeds a pluggable embedding backend. The offline test backend
is a hashed bag-of-words so the module works deterministically without any
model service; the HTTP backend speaks the OpenAI-compatible embeddings
endpoint used elsewhere in the pipeline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
from pathlib import Path
from typing import Protocol, runtime_checkable

import httpx

from .backends import ENV_API_KEY, ENV_BASE_URL, BackendError
from .model import AnnotationCorpus
from .stats import character_counts

log = logging.getLogger(__name__)

ENV_EMBED_MODEL = "LLM_EMBED_MODEL"


@runtime_checkable
class EmbeddingBackend(Protocol):
    backend_id: str
    dimension: int

    def embed(self, text: str) -> list[float]: ...


class HashEmbeddingBackend:
    """Deterministic feature-hashed bag-of-words, unit-normalized."""

    def __init__(self, dimension: int = 64):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.backend_id = f"test:hash{dimension}"

    _TOKEN_RE = re.compile(r"\w+")

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dimension
        for token in self._TOKEN_RE.findall(text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            index = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] & 1 else -1.0
            vec[index] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            return vec
        return [v / norm for v in vec]


class HttpEmbeddingBackend:
    """OpenAI-compatible embeddings client (POST <base>/embeddings)."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        *,
        timeout: float = 60.0,
    ):
        self.base_url = (base_url or os.environ.get(ENV_BASE_URL) or "").rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.model = model or os.environ.get(ENV_EMBED_MODEL) or "text-embedding-3-small"
        if not self.base_url:
            raise BackendError(
                f"no base URL configured; set {ENV_BASE_URL} or pass base_url"
            )
        self.timeout = timeout
        self.backend_id = f"http:{self.model}"
        self.dimension = 0  # discovered from the first response

    def embed(self, text: str) -> list[float]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = httpx.post(
                f"{self.base_url}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"embedding request failed: {exc}") from exc
        if response.status_code >= 400:
            raise BackendError(f"HTTP {response.status_code}: {response.text[:500]}")
        try:
            vector = response.json()["data"][0]["embedding"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(
                f"unexpected embeddings response shape: {response.text[:500]}"
            ) from exc
        if not self.dimension:
            self.dimension = len(vector)
        return [float(v) for v in vector]


def character_profile_text(corpus: AnnotationCorpus, character: str) -> str:
    """Deterministic profile: name, "trait (count)" lines, actions in chunk order."""
    if character not in corpus.by_character:
        raise KeyError(f"no such character: {character!r}")
    stats = next(s for s in character_counts(corpus) if s.character == character)
    lines = [character]
    lines.append(
        ", ".join(f"{trait} ({count})" for trait, count in stats.trait_counts.items())
    )
    records = sorted(corpus.records(character), key=lambda rec: rec.chunk)
    lines.extend(rec.action for rec in records)
    return "\n".join(lines)


def embed_characters(
    corpus: AnnotationCorpus, backend: EmbeddingBackend
) -> dict[str, list[float]]:
    """One vector per character; dimensions are uniform within a run."""
    vectors: dict[str, list[float]] = {}
    dimension: int | None = None
    for name in corpus.characters():
        vector = backend.embed(character_profile_text(corpus, name))
        if dimension is None:
            dimension = len(vector)
        elif len(vector) != dimension:
            raise BackendError(
                f"dimension mismatch for {name!r}: {len(vector)} != {dimension}"
            )
        vectors[name] = vector
    return vectors


def write_embeddings(vectors: dict[str, list[float]], path: str | Path) -> None:
    """Write name -> vector JSON; nothing is written on a partial failure."""
    payload = json.dumps(vectors, ensure_ascii=False, indent=1) + "\n"
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(payload, encoding="utf-8")
    tmp.replace(path)


def cosine_similarity(a: list[float], b: list[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} != {len(b)}")
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)
