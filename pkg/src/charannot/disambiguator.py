"""Detect character names that denote the same entity and merge their
annotation lists.

Candidate pairs are pruned by cheap string similarity and rarity before any
model call, keeping the confirmation budget linear instead of quadratic.
Confirmed pairs are closed transitively (union-find) into merge sets; the
proposal is printed for human review, and a rerun with user-supplied merge
lists applies exactly those merges with zero model calls.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

from .backends import BackendError, CompletionBackend
from .model import AnnotationCorpus, ChunkSet, MergeSet
from .tokens import get_tokenizer

log = logging.getLogger(__name__)

RARE_ANNOTATION_THRESHOLD = 3
SHARED_PREFIX_LENGTH = 4
EDIT_DISTANCE_RATIO = 0.4
DEFAULT_EVIDENCE_WINDOW = 3
DEFAULT_EVIDENCE_TOKEN_BUDGET = 4000
MAX_ACTIONS_IN_PROMPT = 20

PROPOSAL_HEADER = "Initial pseudonym lists from AI:"


class DisambiguationError(ValueError):
    pass


@dataclass(frozen=True)
class MergeProposal:
    merge_sets: tuple[MergeSet, ...]
    # (nameA, nameB) -> chunk indices consulted as evidence
    evidence: dict[tuple[str, str], tuple[int, ...]]

    def format_for_review(self) -> str:
        if not self.merge_sets:
            return PROPOSAL_HEADER + "\n(none)"
        lines = [PROPOSAL_HEADER]
        for ms in self.merge_sets:
            ordered = sorted(ms.names, key=lambda n: (n != ms.canonical, n))
            lines.append(" ".join(f'"{name}"' for name in ordered))
        return "\n".join(lines)


def candidate_pairs(
    corpus: AnnotationCorpus,
    *,
    all_pairs: bool = False,
    rare_threshold: int = RARE_ANNOTATION_THRESHOLD,
) -> list[tuple[str, str]]:
    """Name pairs worth submitting for confirmation.

    A pair qualifies if the names share a word token, share a >= 4 character
    prefix, sit within 0.4 normalized edit distance, or if either name is
    rare (few annotations are typical of an alias). Ordered by descending
    combined annotation count for deterministic output.
    """
    names = corpus.characters()
    if len(names) < 2:
        return []
    counts = {name: len(corpus.records(name)) for name in names}
    pairs: list[tuple[str, str]] = []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = names[i], names[j]
            if all_pairs or _related(a, b) or counts[a] <= rare_threshold or counts[b] <= rare_threshold:
                pair = _orient(a, b, counts)
                pairs.append(pair)
    pairs.sort(key=lambda p: (-(counts[p[0]] + counts[p[1]]), p[0], p[1]))
    return pairs


def _orient(a: str, b: str, counts: dict[str, int]) -> tuple[str, str]:
    key = lambda n: (-counts[n], n)
    return (a, b) if key(a) <= key(b) else (b, a)


def _related(a: str, b: str) -> bool:
    ta = {t for t in a.casefold().split() if t}
    tb = {t for t in b.casefold().split() if t}
    if ta & tb:
        return True
    fa, fb = a.casefold(), b.casefold()
    if len(fa) >= SHARED_PREFIX_LENGTH and len(fb) >= SHARED_PREFIX_LENGTH:
        if fa[:SHARED_PREFIX_LENGTH] == fb[:SHARED_PREFIX_LENGTH]:
            return True
    longest = max(len(fa), len(fb))
    if longest and _levenshtein(fa, fb) / longest <= EDIT_DISTANCE_RATIO:
        return True
    return False


def _levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def gather_evidence(
    pair: tuple[str, str],
    corpus: AnnotationCorpus,
    chunkset: ChunkSet,
    window: int = DEFAULT_EVIDENCE_WINDOW,
    *,
    token_budget: int = DEFAULT_EVIDENCE_TOKEN_BUDGET,
) -> tuple[str, tuple[int, ...]]:
    """Concatenate the text sections around every chunk where either name acts.

    Each annotated chunk is extended to ``window`` consecutive chunks centered
    on it; sections are deduplicated and emitted in chunk order. When the
    total exceeds the token budget, the lowest-priority chunks (fewest pair
    annotations, later first) are dropped — at least one chunk is always kept.
    """
    if window < 1:
        raise DisambiguationError("window must be >= 1")
    for name in pair:
        if name not in corpus.by_character:
            raise DisambiguationError(f"character {name!r} not present in corpus")
    n = len(chunkset)
    annotated: dict[int, int] = {}
    for name in pair:
        for rec in corpus.records(name):
            annotated[rec.chunk] = annotated.get(rec.chunk, 0) + 1

    before = (window - 1) // 2
    after = window // 2
    kept: set[int] = set()
    for center in annotated:
        lo = max(1, center - before)
        hi = min(n, center + after)
        kept.update(range(lo, hi + 1))

    tokenizer_id = chunkset.meta.tokenizer_id
    if tokenizer_id == "unknown":
        tokenizer_id = "bytes4"
    tok = get_tokenizer(tokenizer_id)
    chunk_tokens = {idx: tok.count(chunkset.chunks[idx]) for idx in kept}
    # drop lowest pair-annotation count first, later chunks before earlier ones
    drop_order = sorted(kept, key=lambda idx: (annotated.get(idx, 0), -idx))
    total = sum(chunk_tokens.values())
    for idx in drop_order:
        if total <= token_budget or len(kept) == 1:
            break
        kept.discard(idx)
        total -= chunk_tokens[idx]

    ordered = tuple(sorted(kept))
    sections = [f"[Section {idx}]\n{chunkset.chunks[idx]}" for idx in ordered]
    return "\n\n".join(sections), ordered


def _verdict_token(completion: str) -> str | None:
    for token in completion.replace("—", " ").replace("-", " ").split():
        word = token.strip(".,:;!\"'()[]").upper()
        if word:
            return word if word in ("YES", "NO") else None
    return None


def confirm_pseudonym(
    pair: tuple[str, str],
    evidence: str,
    backend: CompletionBackend,
    corpus: AnnotationCorpus,
    confirmed: tuple[MergeSet, ...] = (),
) -> tuple[bool, str]:
    """Ask the model whether the two names denote one character.

    The verdict is the first YES/NO token of the reply; an unparseable reply
    is retried once and then treated as NO (a wrong merge corrupts two
    characters' data, a missed merge is recoverable by the human override).
    """
    if not evidence:
        raise DisambiguationError("evidence must be non-empty")
    a, b = pair
    lines = [
        f"Two character names appear in the same annotated work: \"{a}\" and \"{b}\".",
        "Decide whether they refer to the same character (a pseudonym, alias,",
        "title, or partial name). Answer YES or NO as the first word, then a",
        "brief justification.",
    ]
    if confirmed:
        merged_lines = ", ".join(
            "{" + ", ".join(sorted(ms.names)) + "}" for ms in confirmed
        )
        lines.append(f"Merges already confirmed in this run: {merged_lines}")
    for name in pair:
        actions = [rec.action for rec in corpus.records(name)][:MAX_ACTIONS_IN_PROMPT]
        lines.append(f'\nAnnotated behaviors of "{name}":')
        lines.extend(f"- {action}" for action in actions)
    lines.append("\nRelevant text sections:\n" + evidence)
    prompt = "\n".join(lines)

    completion = backend.complete(prompt)
    verdict = _verdict_token(completion)
    if verdict is None:
        log.warning("unparseable verdict for pair %r; retrying", pair)
        completion = backend.complete(
            prompt + "\n\nYour previous reply did not start with YES or NO. "
            "Answer YES or NO as the very first word."
        )
        verdict = _verdict_token(completion)
    if verdict is None:
        log.warning("verdict for pair %r unparseable after retry; treating as NO", pair)
        return False, completion
    return verdict == "YES", completion


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def components(self) -> list[set[str]]:
        groups: dict[str, set[str]] = {}
        for x in self.parent:
            groups.setdefault(self.find(x), set()).add(x)
        return [g for g in groups.values() if len(g) >= 2]


def _canonical_name(names: set[str], corpus: AnnotationCorpus) -> str:
    """Most annotations, then longest name, then lexicographically first."""
    return min(
        names,
        key=lambda n: (-len(corpus.by_character.get(n, ())), -len(n), n),
    )


def apply_merges(corpus: AnnotationCorpus, merge_sets: tuple[MergeSet, ...]) -> AnnotationCorpus:
    """Concatenate each set's annotation lists under the canonical name,
    preserving chunk order; the total record count is unchanged."""
    alias_to_canonical: dict[str, str] = {}
    for ms in merge_sets:
        for name in ms.names:
            alias_to_canonical[name] = ms.canonical

    merged: dict[str, list] = {}
    order: list[str] = []
    for name, records in corpus.by_character.items():
        target = alias_to_canonical.get(name, name)
        if target not in merged:
            merged[target] = []
            order.append(target)
        merged[target].extend(
            dataclasses.replace(rec, character=target) for rec in records
        )
    by_char = {}
    for name in order:
        records = merged[name]
        if name in alias_to_canonical.values():
            # only actually-merged lists are re-ordered by chunk (stable)
            records = sorted(records, key=lambda rec: rec.chunk)
        by_char[name] = tuple(records)
    return AnnotationCorpus(by_char)


def disambiguate(
    corpus: AnnotationCorpus,
    chunkset: ChunkSet,
    backend: CompletionBackend | None,
    user_merge_sets: list[set[str]] | None = None,
    *,
    window: int = DEFAULT_EVIDENCE_WINDOW,
    all_pairs: bool = False,
    token_budget: int = DEFAULT_EVIDENCE_TOKEN_BUDGET,
    parallelism: int = 1,
    print_proposal: bool = True,
) -> tuple[AnnotationCorpus, MergeProposal]:
    """Merge pseudonymous character lists, machine-proposed or user-directed.

    With ``user_merge_sets`` no model call is made and exactly those merges
    apply. Otherwise candidate pairs are confirmed one by one (earlier
    confirmations are quoted in later prompts), closed transitively, printed
    for review, and applied.
    """
    if user_merge_sets is not None:
        unknown = sorted(
            name
            for merge_set in user_merge_sets
            for name in merge_set
            if name not in corpus.by_character
        )
        if unknown:
            raise DisambiguationError(
                "user merge sets name unknown characters: " + ", ".join(unknown)
            )
        merge_sets = tuple(
            MergeSet(names=frozenset(s), canonical=_canonical_name(set(s), corpus))
            for s in user_merge_sets
        )
        _check_disjoint(merge_sets)
        proposal = MergeProposal(merge_sets=merge_sets, evidence={})
        return apply_merges(corpus, merge_sets), proposal

    if backend is None:
        raise DisambiguationError("a backend is required without user merge sets")
    if parallelism > 1:
        log.warning(
            "parallel confirmation disables cross-section merge memory "
            "(prompt order would be timing-dependent)"
        )

    uf = _UnionFind()
    evidence_map: dict[tuple[str, str], tuple[int, ...]] = {}
    confirmed_sets: list[MergeSet] = []
    for pair in candidate_pairs(corpus, all_pairs=all_pairs):
        evidence, consulted = gather_evidence(
            pair, corpus, chunkset, window, token_budget=token_budget
        )
        evidence_map[pair] = consulted
        memory = tuple(confirmed_sets) if parallelism == 1 else ()
        try:
            is_same, _rationale = confirm_pseudonym(
                pair, evidence, backend, corpus, confirmed=memory
            )
        except BackendError as exc:
            raise DisambiguationError(
                f"backend failed while confirming {pair!r}: {exc}"
            ) from exc
        if is_same:
            uf.union(*pair)
            confirmed_sets.append(
                MergeSet(names=frozenset(pair), canonical=_canonical_name(set(pair), corpus))
            )

    merge_sets = tuple(
        sorted(
            (
                MergeSet(names=frozenset(comp), canonical=_canonical_name(comp, corpus))
                for comp in uf.components()
            ),
            key=lambda ms: ms.canonical,
        )
    )
    proposal = MergeProposal(merge_sets=merge_sets, evidence=evidence_map)
    if print_proposal:
        print(proposal.format_for_review())
    refined = apply_merges(corpus, merge_sets)
    return refined, proposal


def _check_disjoint(merge_sets: tuple[MergeSet, ...]) -> None:
    seen: set[str] = set()
    for ms in merge_sets:
        overlap = seen & ms.names
        if overlap:
            raise DisambiguationError(
                f"merge sets overlap on: {', '.join(sorted(overlap))}"
            )
        seen |= ms.names
