"""Shared data types and their serialized file forms.

Every pipeline stage exchanges one of three artifacts:

* the chunk file — JSON object mapping string indices "1".."N" to chunk text,
* the annotations file — JSON object mapping character name to a list of
  ``{"Action": ..., <trait>: <rating>, "Chunk": ...}`` entries,
* the eval store — append-only JSON Lines of human judgments.

Serialization is deterministic: identical values produce identical bytes.
All types are immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator


class SchemaError(ValueError):
    """A structurally invalid artifact (wrong keys, types, or ranges)."""


class CorpusParseError(ValueError):
    """Malformed JSON input; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class RatingScale:
    """Strictly increasing integer rating values; defaults to presence-only."""

    values: tuple[int, ...] = (1,)

    def __post_init__(self):
        if not self.values:
            raise SchemaError("rating scale must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise SchemaError(f"rating scale must be strictly increasing: {self.values}")

    def __contains__(self, rating: int) -> bool:
        return rating in self.values

    def clamp(self, rating: int) -> int:
        """Nearest scale value; ties resolve toward the lower value."""
        return min(self.values, key=lambda v: (abs(v - rating), v))

    @classmethod
    def of(cls, values: Iterable[int]) -> "RatingScale":
        return cls(tuple(int(v) for v in values))


@dataclass(frozen=True)
class TraitExample:
    name: str
    action: str
    assessment: str
    rating: int


@dataclass(frozen=True)
class TraitSpec:
    """A named trait with an explanation and worked rating examples."""

    name: str
    trait_explanation: str
    examples: tuple[TraitExample, ...]

    def __post_init__(self):
        if not self.name:
            raise SchemaError("trait name must be non-empty")
        if not self.examples:
            raise SchemaError(f"trait {self.name!r} needs at least one example")

    def validate_against(self, scale: RatingScale) -> None:
        for ex in self.examples:
            if ex.rating not in scale:
                raise SchemaError(
                    f"trait {self.name!r} example rating {ex.rating} "
                    f"is not in the rating scale {scale.values}"
                )


def trait_specs_from_dict(raw: dict) -> dict[str, TraitSpec]:
    """Build TraitSpecs from the annotate traits-file structure."""
    specs: dict[str, TraitSpec] = {}
    for name, body in raw.items():
        try:
            examples = tuple(
                TraitExample(
                    name=str(ex["name"]),
                    action=str(ex["action"]),
                    assessment=str(ex["assessment"]),
                    rating=int(ex["rating"]),
                )
                for ex in body["examples"]
            )
            specs[name] = TraitSpec(
                name=name,
                trait_explanation=str(body["trait_explanation"]),
                examples=examples,
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed trait spec for {name!r}: {exc}") from exc
    return specs


@dataclass(frozen=True)
class Annotation:
    """One (character, action, trait, rating, chunk) record — the pipeline's atom."""

    character: str
    action: str
    trait: str
    rating: int
    chunk: int

    def __post_init__(self):
        if not self.character:
            raise SchemaError("annotation character must be non-empty")
        if self.chunk < 1:
            raise SchemaError(f"annotation chunk index must be >= 1, got {self.chunk}")


@dataclass(frozen=True)
class AnnotationCorpus:
    """Character name -> annotations, in first-appearance order."""

    by_character: dict[str, tuple[Annotation, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name, records in self.by_character.items():
            if not name:
                raise SchemaError("character names must be non-empty")
            for rec in records:
                if rec.character != name:
                    raise SchemaError(
                        f"record under {name!r} carries character {rec.character!r}"
                    )

    def characters(self) -> list[str]:
        return list(self.by_character)

    def records(self, character: str) -> tuple[Annotation, ...]:
        return self.by_character[character]

    def total_count(self) -> int:
        return sum(len(v) for v in self.by_character.values())

    def flatten(self) -> list[Annotation]:
        """All records, character first-appearance order, then list order."""
        return [rec for records in self.by_character.values() for rec in records]

    @classmethod
    def from_records(cls, records: Iterable[Annotation]) -> "AnnotationCorpus":
        by_char: dict[str, list[Annotation]] = {}
        for rec in records:
            by_char.setdefault(rec.character, []).append(rec)
        return cls({name: tuple(recs) for name, recs in by_char.items()})


@dataclass(frozen=True)
class MergeSet:
    """Names confirmed to denote one character, plus the canonical member."""

    names: frozenset[str]
    canonical: str

    def __post_init__(self):
        if len(self.names) < 2:
            raise SchemaError("a merge set needs at least two distinct names")
        if self.canonical not in self.names:
            raise SchemaError(
                f"canonical {self.canonical!r} is not among the merge set names"
            )


@dataclass(frozen=True)
class EvalRecord:
    """One human judgment of one sampled annotation."""

    character: str
    chunk: int
    action: str
    trait: str
    llm_rating: int
    label: str
    sampled_index: int
    timestamp: str


# ---------------------------------------------------------------------------
# Annotations file
# ---------------------------------------------------------------------------

_ENTRY_FIXED_KEYS = ("Action", "Chunk")


def serialize_corpus(corpus: AnnotationCorpus) -> bytes:
    """Deterministic UTF-8 JSON; entry keys ordered Action, trait, Chunk."""
    doc: dict[str, list[dict]] = {}
    for name, records in corpus.by_character.items():
        doc[name] = [
            {"Action": rec.action, rec.trait: rec.rating, "Chunk": rec.chunk}
            for rec in records
        ]
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def parse_corpus(data: bytes | str) -> AnnotationCorpus:
    """Parse an annotations file, tolerating human edits to whitespace/order."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise CorpusParseError(f"malformed annotations JSON: {exc.msg}", byte_offset)
    if not isinstance(doc, dict):
        raise SchemaError("annotations file must be a JSON object keyed by character")

    by_char: dict[str, tuple[Annotation, ...]] = {}
    for name, entries in doc.items():
        if not isinstance(entries, list):
            raise SchemaError(f"character {name!r}: expected a list of annotations")
        records = []
        for i, entry in enumerate(entries):
            records.append(_parse_entry(name, i, entry))
        by_char[name] = tuple(records)
    return AnnotationCorpus(by_char)


def _parse_entry(name: str, index: int, entry) -> Annotation:
    where = f"character {name!r}, entry {index}"
    if not isinstance(entry, dict):
        raise SchemaError(f"{where}: expected an object")
    trait_keys = [k for k in entry if k not in _ENTRY_FIXED_KEYS]
    if len(trait_keys) != 1:
        raise SchemaError(
            f"{where}: expected exactly one trait key, found {trait_keys or 'none'}"
        )
    trait = trait_keys[0]
    action = entry.get("Action")
    chunk = entry.get("Chunk")
    rating = entry[trait]
    if not isinstance(action, str):
        raise SchemaError(f"{where}: missing or non-string 'Action'")
    if not isinstance(chunk, int) or isinstance(chunk, bool):
        raise SchemaError(f"{where}: missing or non-integer 'Chunk'")
    if not isinstance(rating, int) or isinstance(rating, bool):
        raise SchemaError(f"{where}: trait {trait!r} rating must be an integer")
    return Annotation(character=name, action=action, trait=trait, rating=rating, chunk=chunk)


def write_corpus(corpus: AnnotationCorpus, path: str | Path) -> None:
    Path(path).write_bytes(serialize_corpus(corpus))


def read_corpus(path: str | Path) -> AnnotationCorpus:
    return parse_corpus(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Chunk file
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChunkMeta:
    target_tokens: int
    tokenizer_id: str
    context_sentences: int
    custom_splitter: str | None = None
    # per-chunk byte length of the prepended overlap context (0 for chunk 1)
    overlap_prefix_bytes: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ChunkSet:
    """Ordered 1-based chunk index -> chunk text, plus chunking metadata."""

    chunks: dict[int, str]
    meta: ChunkMeta

    def __post_init__(self):
        indices = list(self.chunks)
        if indices != list(range(1, len(indices) + 1)):
            raise SchemaError(f"chunk indices must be contiguous from 1, got {indices}")
        for idx, text in self.chunks.items():
            if not text:
                raise SchemaError(f"chunk {idx} is empty")

    def __len__(self) -> int:
        return len(self.chunks)

    def __iter__(self) -> Iterator[tuple[int, str]]:
        return iter(self.chunks.items())

    def body(self, index: int) -> str:
        """Chunk text with the overlap prefix stripped."""
        text = self.chunks[index]
        skip = self.meta.overlap_prefix_bytes.get(index, 0)
        if skip == 0:
            return text
        return text.encode("utf-8")[skip:].decode("utf-8")

    def overlap_prefix(self, index: int) -> str:
        text = self.chunks[index]
        skip = self.meta.overlap_prefix_bytes.get(index, 0)
        if skip == 0:
            return ""
        return text.encode("utf-8")[:skip].decode("utf-8")


def serialize_chunks(chunkset: ChunkSet) -> bytes:
    doc = {str(i): text for i, text in chunkset.chunks.items()}
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def write_chunks(chunkset: ChunkSet, path: str | Path) -> None:
    Path(path).write_bytes(serialize_chunks(chunkset))


def parse_chunk_file(data: bytes | str, meta: ChunkMeta | None = None) -> ChunkSet:
    """Read a chunk file; integer and string keys are both accepted."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise CorpusParseError(f"malformed chunk JSON: {exc.msg}", byte_offset)
    if not isinstance(doc, dict):
        raise SchemaError("chunk file must be a JSON object")
    chunks: dict[int, str] = {}
    for key, value in doc.items():
        try:
            idx = int(key)
        except (TypeError, ValueError):
            raise SchemaError(f"chunk key {key!r} is not an integer") from None
        if not isinstance(value, str):
            raise SchemaError(f"chunk {key!r} text must be a string")
        chunks[idx] = value
    chunks = dict(sorted(chunks.items()))
    if meta is None:
        meta = ChunkMeta(
            target_tokens=0, tokenizer_id="unknown", context_sentences=0
        )
    return ChunkSet(chunks=chunks, meta=meta)


def read_chunks(path: str | Path, meta: ChunkMeta | None = None) -> ChunkSet:
    return parse_chunk_file(Path(path).read_bytes(), meta)


# ---------------------------------------------------------------------------
# Eval store (JSON Lines, append-only; undo is a tombstone line)
# ---------------------------------------------------------------------------

TOMBSTONE_KEY = "undo"


def append_eval_record(path: str | Path, record: EvalRecord) -> None:
    line = json.dumps(
        {
            "character": record.character,
            "chunk": record.chunk,
            "action": record.action,
            "trait": record.trait,
            "llm_rating": record.llm_rating,
            "label": record.label,
            "sampled_index": record.sampled_index,
            "timestamp": record.timestamp,
        },
        ensure_ascii=False,
    )
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")


def append_eval_tombstone(path: str | Path, timestamp: str) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({TOMBSTONE_KEY: True, "timestamp": timestamp}) + "\n")


def replay_eval_records(path: str | Path) -> list[EvalRecord]:
    """Replay the append-only store; a tombstone removes the latest record."""
    stack: list[EvalRecord] = []
    path = Path(path)
    if not path.exists():
        return stack
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"eval store line {lineno}: {exc.msg}") from exc
            if obj.get(TOMBSTONE_KEY):
                if not stack:
                    raise SchemaError(f"eval store line {lineno}: tombstone with no record")
                stack.pop()
                continue
            try:
                stack.append(
                    EvalRecord(
                        character=obj["character"],
                        chunk=int(obj["chunk"]),
                        action=obj["action"],
                        trait=obj["trait"],
                        llm_rating=int(obj["llm_rating"]),
                        label=str(obj["label"]),
                        sampled_index=int(obj["sampled_index"]),
                        timestamp=str(obj["timestamp"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"eval store line {lineno}: {exc}") from exc
    return stack
