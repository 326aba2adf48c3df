"""Per-chunk LLM annotation: prompt construction, response parsing, and
cross-chunk character memory.

Chunks are processed in index order so that each prompt's known-character
roster reflects every name emitted by earlier chunks; this also makes runs
under the scripted mock byte-deterministic. A chunk whose response cannot be
parsed is retried once with a repair prompt, then skipped with a log entry —
never silently dropped from the accounting.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendError, CompletionBackend
from .model import (
    Annotation,
    AnnotationCorpus,
    ChunkSet,
    RatingScale,
    SchemaError,
    TraitSpec,
    parse_corpus,
    serialize_corpus,
)

log = logging.getLogger(__name__)

EXPLORATORY_DEFAULT_RATING = 1


class ParseFailure(ValueError):
    """The completion contained no parseable JSON annotation array."""


class AnnotateAborted(RuntimeError):
    """Backend gave up mid-run; a checkpoint records the completed prefix."""

    def __init__(self, message: str, last_completed_chunk: int):
        super().__init__(message)
        self.last_completed_chunk = last_completed_chunk


@dataclass(frozen=True)
class AnnotateOptions:
    traits: dict[str, TraitSpec] | None = None
    rating_scale: RatingScale | None = None
    book_title: str | None = None
    target_characters: tuple[str, ...] | None = None
    parallelism: int = 4

    def __post_init__(self):
        if self.parallelism < 1:
            raise SchemaError("parallelism must be >= 1")
        if self.traits is not None:
            if self.rating_scale is None:
                raise SchemaError("rating_scale must be explicit when traits are given")
            for spec in self.traits.values():
                spec.validate_against(self.rating_scale)

    @property
    def scale(self) -> RatingScale:
        return self.rating_scale if self.rating_scale is not None else RatingScale()

    @property
    def exploratory(self) -> bool:
        return self.traits is None


class CharacterRoster:
    """Insertion-ordered character names with their first-seen chunk index."""

    def __init__(self):
        self._first_seen: dict[str, int] = {}

    def add(self, name: str, chunk_index: int) -> None:
        self._first_seen.setdefault(name, chunk_index)

    def names(self) -> list[str]:
        return list(self._first_seen)

    def first_seen(self, name: str) -> int:
        return self._first_seen[name]

    def __contains__(self, name: str) -> bool:
        return name in self._first_seen

    def __len__(self) -> int:
        return len(self._first_seen)


_OUTPUT_CONTRACT = (
    "Reply with a JSON array only — no prose before or after it. Each element "
    'must be an object of the form {"character": <full name>, "action": '
    '<behavior description>, "traits": [{"name": <trait label>, "rating": '
    "<integer>}]}. Use an empty array [] if the section shows no character "
    "behavior."
)


def build_prompt(
    chunk_text: str,
    chunk_index: int,
    options: AnnotateOptions,
    roster: CharacterRoster,
) -> str:
    """Assemble the annotation prompt for one chunk (fixed section order)."""
    if not chunk_text:
        raise ValueError("chunk_text must be non-empty")
    parts: list[str] = []
    parts.append(
        "Read the text section below and list every character behavior it "
        "shows: actions, statements, thoughts, and prominent omissions. "
        "Attribute each behavior to the character performing it, always using "
        "the character's full name. Attach the personality traits each "
        "behavior reveals."
    )
    if options.book_title:
        parts.append(f"The text is from: {options.book_title}")
    if options.traits is not None:
        scale_values = ", ".join(str(v) for v in options.scale.values)
        trait_lines = [
            "Rate only the following traits, using the rating scale "
            f"[{scale_values}] (higher means the behavior expresses the trait "
            "more strongly):"
        ]
        for spec in options.traits.values():
            trait_lines.append(f"\nTrait: {spec.name}")
            trait_lines.append(f"Definition: {spec.trait_explanation}")
            for ex in spec.examples:
                trait_lines.append(
                    f"Example: {ex.name} — {ex.action} Assessment: "
                    f"{ex.assessment} Rating: {ex.rating}"
                )
        parts.append("\n".join(trait_lines))
    else:
        parts.append(
            "No trait list is prescribed: invent concise lowercase trait "
            "labels (one or two words) that describe what each behavior "
            "reveals about the character."
        )
    if options.target_characters:
        parts.append(
            "Only annotate these characters and ignore all others: "
            + ", ".join(options.target_characters)
        )
    if len(roster):
        parts.append("Characters known so far: " + ", ".join(roster.names()))
    else:
        parts.append("Characters known so far: none yet.")
    parts.append(f"Text section {chunk_index}:\n---\n{chunk_text}\n---")
    parts.append(_OUTPUT_CONTRACT)
    return "\n\n".join(parts)


def build_repair_prompt(original_prompt: str, bad_completion: str) -> str:
    return (
        original_prompt
        + "\n\nYour previous reply could not be parsed as a JSON array. "
        + "Previous reply:\n"
        + bad_completion
        + "\n\nReply again. "
        + _OUTPUT_CONTRACT
    )


@dataclass
class ParseOutcome:
    records: list[Annotation]
    clamped: int = 0
    skipped_elements: int = 0


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def _extract_json_array(completion: str):
    try:
        value = json.loads(completion)
        if isinstance(value, list):
            return value
    except json.JSONDecodeError:
        pass
    for match in _FENCE_RE.finditer(completion):
        try:
            value = json.loads(match.group(1))
            if isinstance(value, list):
                return value
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(completion):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(completion, pos)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    return None


def parse_annotation_response(
    completion: str,
    chunk_index: int,
    rating_scale: RatingScale,
    *,
    exploratory: bool = True,
) -> ParseOutcome:
    """Expand the model's JSON array into one Annotation per inferred trait.

    Missing ratings default to 1 in exploratory mode and skip the trait
    otherwise; out-of-scale ratings are clamped to the nearest scale value
    and counted.
    """
    array = _extract_json_array(completion)
    if array is None:
        raise ParseFailure(
            f"no JSON array found in completion for chunk {chunk_index}"
        )
    outcome = ParseOutcome(records=[])
    for element in array:
        if not isinstance(element, dict):
            outcome.skipped_elements += 1
            log.warning("chunk %d: skipping non-object element", chunk_index)
            continue
        character = element.get("character")
        action = element.get("action")
        if not isinstance(character, str) or not character.strip():
            outcome.skipped_elements += 1
            log.warning("chunk %d: element missing character", chunk_index)
            continue
        if not isinstance(action, str) or not action.strip():
            outcome.skipped_elements += 1
            log.warning("chunk %d: element missing action", chunk_index)
            continue
        character = character.strip()
        traits = element.get("traits")
        if not isinstance(traits, list) or not traits:
            outcome.skipped_elements += 1
            log.warning(
                "chunk %d: element for %r has no traits list", chunk_index, character
            )
            continue
        for trait_obj in traits:
            parsed = _parse_trait(trait_obj, exploratory, rating_scale, chunk_index)
            if parsed is None:
                continue
            trait_name, rating, clamped = parsed
            outcome.clamped += clamped
            outcome.records.append(
                Annotation(
                    character=character,
                    action=action.strip(),
                    trait=trait_name,
                    rating=rating,
                    chunk=chunk_index,
                )
            )
    return outcome


def _parse_trait(trait_obj, exploratory: bool, scale: RatingScale, chunk_index: int):
    if isinstance(trait_obj, str):
        trait_obj = {"name": trait_obj}
    if not isinstance(trait_obj, dict):
        log.warning("chunk %d: skipping malformed trait entry", chunk_index)
        return None
    name = trait_obj.get("name")
    if not isinstance(name, str) or not name.strip():
        log.warning("chunk %d: skipping trait without a name", chunk_index)
        return None
    name = name.strip()
    if exploratory:
        name = name.lower()
    raw = trait_obj.get("rating")
    if raw is None:
        if exploratory:
            return name, EXPLORATORY_DEFAULT_RATING, 0
        log.warning("chunk %d: trait %r missing rating; skipped", chunk_index, name)
        return None
    try:
        rating = int(raw)
    except (TypeError, ValueError):
        log.warning("chunk %d: trait %r has non-integer rating %r", chunk_index, name, raw)
        return None
    if rating in scale:
        return name, rating, 0
    clamped = scale.clamp(rating)
    log.warning(
        "chunk %d: rating %d for trait %r outside scale; clamped to %d",
        chunk_index,
        rating,
        name,
        clamped,
    )
    return name, clamped, 1


@dataclass
class AnnotateResult:
    corpus: AnnotationCorpus
    clamped_ratings: int = 0
    skipped_chunks: tuple[int, ...] = ()
    roster: CharacterRoster = field(default_factory=CharacterRoster)


def annotate(
    chunkset: ChunkSet,
    backend: CompletionBackend,
    options: AnnotateOptions | None = None,
    *,
    checkpoint_path: str | Path | None = None,
    resume: bool = False,
) -> AnnotateResult:
    """Run the annotation loop over every chunk and aggregate a corpus.

    On a backend failure the run aborts with :class:`AnnotateAborted` after
    writing a checkpoint (when a path is configured); rerunning with
    ``resume=True`` continues after the last completed chunk.

    Chunks are processed strictly in index order: every prompt's roster must
    contain all names emitted by earlier chunks, which leaves no room for
    concurrent in-flight requests (options.parallelism caps backend fan-out
    in stages without that ordering constraint).
    """
    options = options or AnnotateOptions()
    roster = CharacterRoster()
    by_char: dict[str, list[Annotation]] = {}
    clamped = 0
    skipped: list[int] = []
    start_after = 0

    if resume:
        if checkpoint_path is None or not Path(checkpoint_path).exists():
            raise SchemaError("resume requested but no checkpoint file exists")
        start_after, by_char, clamped = _load_checkpoint(checkpoint_path)
        for records in by_char.values():
            for rec in records:
                roster.add(rec.character, rec.chunk)
        log.info("resuming after chunk %d", start_after)

    targets = set(options.target_characters or ())
    for index, text in chunkset:
        if index <= start_after:
            continue
        prompt = build_prompt(text, index, options, roster)
        try:
            outcome = _annotate_chunk(backend, prompt, index, options)
        except BackendError as exc:
            if checkpoint_path is not None:
                _write_checkpoint(checkpoint_path, index - 1, by_char, clamped)
            raise AnnotateAborted(
                f"backend failed on chunk {index}: {exc}", last_completed_chunk=index - 1
            ) from exc
        if outcome is None:
            skipped.append(index)
            log.error("chunk %d skipped: response unparseable after repair retry", index)
        else:
            clamped += outcome.clamped
            for rec in outcome.records:
                roster.add(rec.character, index)
                if targets and rec.character not in targets:
                    continue
                by_char.setdefault(rec.character, []).append(rec)
        if checkpoint_path is not None:
            _write_checkpoint(checkpoint_path, index, by_char, clamped)

    corpus = AnnotationCorpus({name: tuple(recs) for name, recs in by_char.items()})
    return AnnotateResult(
        corpus=corpus,
        clamped_ratings=clamped,
        skipped_chunks=tuple(skipped),
        roster=roster,
    )


def _annotate_chunk(
    backend: CompletionBackend,
    prompt: str,
    index: int,
    options: AnnotateOptions,
) -> ParseOutcome | None:
    completion = backend.complete(prompt)
    try:
        return parse_annotation_response(
            completion, index, options.scale, exploratory=options.exploratory
        )
    except ParseFailure:
        log.warning("chunk %d: unparseable response; retrying with repair prompt", index)
    repair = build_repair_prompt(prompt, completion)
    completion = backend.complete(repair)
    try:
        return parse_annotation_response(
            completion, index, options.scale, exploratory=options.exploratory
        )
    except ParseFailure:
        return None


def _write_checkpoint(path: str | Path, last_chunk: int, by_char, clamped: int) -> None:
    corpus = AnnotationCorpus({name: tuple(recs) for name, recs in by_char.items()})
    doc = {
        "last_chunk": last_chunk,
        "clamped": clamped,
        "corpus": json.loads(serialize_corpus(corpus).decode("utf-8")),
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    tmp.replace(path)


def _load_checkpoint(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    corpus = parse_corpus(json.dumps(doc["corpus"], ensure_ascii=False))
    by_char = {name: list(records) for name, records in corpus.by_character.items()}
    return int(doc["last_chunk"]), by_char, int(doc.get("clamped", 0))
