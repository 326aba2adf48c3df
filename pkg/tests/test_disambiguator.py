import itertools
import random

import pytest

from charannot.backends import ScriptedMock, ScriptEntry
from charannot.disambiguator import (
    DisambiguationError,
    apply_merges,
    candidate_pairs,
    confirm_pseudonym,
    disambiguate,
    gather_evidence,
)
from charannot.model import Annotation, AnnotationCorpus, MergeSet
from conftest import make_chunkset


def corpus_of(spec: dict[str, int]) -> AnnotationCorpus:
    """spec: name -> number of annotations (chunks cycle 1..5)."""
    records = []
    for name, count in spec.items():
        for i in range(count):
            records.append(
                Annotation(name, f"{name} does thing {i}", "trait", 1, (i % 5) + 1)
            )
    return AnnotationCorpus.from_records(records)


def yes_mock() -> ScriptedMock:
    return ScriptedMock([ScriptEntry(response="YES — same person.", match="*", repeat=True)])


def no_mock() -> ScriptedMock:
    return ScriptedMock([ScriptEntry(response="NO.", match="*", repeat=True)])


# -- candidate pairs ---------------------------------------------------------


def test_shared_token_pairs_included():
    corpus = corpus_of({"Homer": 10, "Homer Simpson": 10, "Marge Simpson": 10})
    pairs = candidate_pairs(corpus)
    assert ("Homer", "Homer Simpson") in pairs or ("Homer Simpson", "Homer") in pairs
    flat = {frozenset(p) for p in pairs}
    assert frozenset({"Homer Simpson", "Marge Simpson"}) in flat  # shared "Simpson"


def test_single_character_no_pairs():
    assert candidate_pairs(corpus_of({"Homer": 5})) == []


def test_rare_name_pairs_with_everyone():
    corpus = corpus_of({"Jane Bennet": 40, "Miss Bennet": 3, "Kitty": 20})
    pairs = {frozenset(p) for p in candidate_pairs(corpus)}
    # included twice over: shared token and the <= 3 annotations rule
    assert frozenset({"Jane Bennet", "Miss Bennet"}) in pairs
    assert frozenset({"Miss Bennet", "Kitty"}) in pairs  # rare rule alone


def test_unrelated_frequent_names_not_paired():
    corpus = corpus_of({"Elizabeth Bennet": 30, "Wickham": 12})
    assert candidate_pairs(corpus) == []


def test_prefix_and_edit_distance_rules():
    corpus = corpus_of({"Elizabeth": 20, "Eliza": 9})
    assert len(candidate_pairs(corpus)) == 1  # >= 4-char shared prefix
    corpus = corpus_of({"Wickham": 20, "Wykham": 9})
    assert len(candidate_pairs(corpus)) == 1  # edit distance 2/7 <= 0.4


def test_pairs_ordered_by_combined_count():
    corpus = corpus_of({"A Smith": 30, "B Smith": 20, "C Smith": 5})
    pairs = candidate_pairs(corpus)
    combined = [30 + 20, 30 + 5, 20 + 5]
    names = {"A Smith": 30, "B Smith": 20, "C Smith": 5}
    got = [names[a] + names[b] for a, b in pairs]
    assert got == combined


def test_all_pairs_flag():
    corpus = corpus_of({"Alpha": 10, "Omega": 10, "Zed": 10})
    assert len(candidate_pairs(corpus)) == 0
    assert len(candidate_pairs(corpus, all_pairs=True)) == 3


# -- evidence ---------------------------------------------------------------


def test_evidence_window_around_single_chunk():
    records = [
        Annotation("A", "acts", "t", 1, 5),
        Annotation("B", "acts too", "t", 1, 5),
    ]
    corpus = AnnotationCorpus.from_records(records)
    chunkset = make_chunkset([f"text {i}" for i in range(1, 11)])
    text, consulted = gather_evidence(("A", "B"), corpus, chunkset, window=3)
    assert consulted == (4, 5, 6)
    assert "[Section 4]" in text and "[Section 6]" in text


def test_evidence_adjacent_chunks_deduplicated():
    records = [
        Annotation("A", "acts", "t", 1, 1),
        Annotation("B", "acts", "t", 1, 2),
    ]
    corpus = AnnotationCorpus.from_records(records)
    chunkset = make_chunkset([f"text {i}" for i in range(1, 11)])
    _, consulted = gather_evidence(("A", "B"), corpus, chunkset, window=1)
    assert consulted == (1, 2)


def test_evidence_budget_drops_lowest_priority_first():
    # pair annotated heavily in chunk 2, lightly in chunk 7
    records = (
        [Annotation("A", f"a{i}", "t", 1, 2) for i in range(5)]
        + [Annotation("B", "b", "t", 1, 7)]
    )
    corpus = AnnotationCorpus.from_records(records)
    texts = ["w " * 50 for _ in range(8)]  # 100 bytes -> 25 tokens each (bytes4)
    chunkset = make_chunkset(texts)
    text, consulted = gather_evidence(
        ("A", "B"), corpus, chunkset, window=3, token_budget=80
    )
    # brute-force oracle: drop by (pair-annotation count asc, index desc)
    full = {1, 2, 3, 6, 7, 8}
    counts = {2: 5, 7: 1}
    order = sorted(full, key=lambda i: (counts.get(i, 0), -i))
    expect = set(full)
    total = 25 * len(full)
    for idx in order:
        if total <= 80:
            break
        expect.discard(idx)
        total -= 25
    assert set(consulted) == expect
    assert 2 in consulted  # the highest-priority chunk survives


def test_evidence_unknown_name_rejected():
    corpus = corpus_of({"A": 2})
    with pytest.raises(DisambiguationError):
        gather_evidence(("A", "Z"), corpus, make_chunkset(["text"]), window=1)


# -- confirmation -------------------------------------------------------------


def test_confirm_yes_verdict():
    corpus = corpus_of({"Jane Bennet": 4, "Miss Bennet": 3})
    mock = ScriptedMock(["YES — Miss Bennet's three actions all describe Jane."])
    same, rationale = confirm_pseudonym(
        ("Jane Bennet", "Miss Bennet"), "evidence text", mock, corpus
    )
    assert same is True
    assert "describe Jane" in rationale


def test_confirm_no_verdict():
    corpus = corpus_of({"A": 2, "B": 2})
    same, _ = confirm_pseudonym(("A", "B"), "evidence", ScriptedMock(["NO"]), corpus)
    assert same is False


def test_confirm_gibberish_twice_is_no():
    corpus = corpus_of({"A": 2, "B": 2})
    mock = ScriptedMock(["hmm, unclear", "perhaps?"])
    same, _ = confirm_pseudonym(("A", "B"), "evidence", mock, corpus)
    assert same is False
    assert mock.call_count == 2


def test_confirm_repair_retry_can_recover():
    corpus = corpus_of({"A": 2, "B": 2})
    mock = ScriptedMock(["thinking out loud...", "YES definitely"])
    same, _ = confirm_pseudonym(("A", "B"), "evidence", mock, corpus)
    assert same is True


def test_confirm_requires_evidence():
    with pytest.raises(DisambiguationError):
        confirm_pseudonym(("A", "B"), "", ScriptedMock([]), corpus_of({"A": 1, "B": 1}))


def test_confirmed_merges_listed_in_later_prompts():
    prompts = []

    class Recorder:
        backend_id = "rec"

        def complete(self, prompt):
            prompts.append(prompt)
            return "YES"

    corpus = corpus_of({"Homer": 8, "Homer Simpson": 8, "Homer J": 2})
    chunkset = make_chunkset([f"text {i}" for i in range(1, 6)])
    disambiguate(corpus, chunkset, Recorder(), print_proposal=False)
    assert len(prompts) >= 2
    assert "already confirmed" in prompts[-1]


# -- merging ------------------------------------------------------------------


def test_user_merge_sets_skip_backend():
    corpus = corpus_of({"Homer": 5, "Homer Simpson": 9, "Wiggum": 4, "Police chief": 2})
    chunkset = make_chunkset([f"text {i}" for i in range(1, 6)])
    mock = no_mock()
    refined, proposal = disambiguate(
        corpus,
        chunkset,
        mock,
        user_merge_sets=[{"Homer", "Homer Simpson"}, {"Wiggum", "Police chief"}],
    )
    assert mock.call_count == 0
    assert refined.characters() == ["Homer Simpson", "Wiggum"]
    assert refined.total_count() == corpus.total_count()
    assert len(proposal.merge_sets) == 2


def test_user_merge_sets_unknown_names_error():
    corpus = corpus_of({"Homer": 5})
    with pytest.raises(DisambiguationError, match="Homer Simson"):
        disambiguate(
            corpus,
            make_chunkset(["text"]),
            None,
            user_merge_sets=[{"Homer", "Homer Simson"}],
        )


def test_no_candidates_leaves_corpus_unchanged():
    corpus = corpus_of({"Elizabeth Bennet": 30, "Wickham": 12})
    refined, proposal = disambiguate(
        corpus, make_chunkset([f"t{i}" for i in range(1, 6)]), no_mock(), print_proposal=False
    )
    assert refined == corpus
    assert proposal.merge_sets == ()


def test_transitive_closure_via_union_find():
    corpus = corpus_of({"A Smith": 10, "B Smith": 8, "C Smith": 2})
    chunkset = make_chunkset([f"text {i}" for i in range(1, 6)])
    refined, proposal = disambiguate(corpus, chunkset, yes_mock(), print_proposal=False)
    assert len(proposal.merge_sets) == 1
    assert proposal.merge_sets[0].names == frozenset({"A Smith", "B Smith", "C Smith"})
    assert refined.characters() == ["A Smith"]
    assert refined.total_count() == 20


def test_union_find_matches_closure_oracle():
    rng = random.Random(42)
    names = [f"N{i} Shared" for i in range(7)]  # shared token -> all pairs eligible
    for _ in range(20):
        corpus = corpus_of({name: rng.randint(4, 9) for name in names})
        decisions = {
            frozenset(pair): rng.random() < 0.3
            for pair in itertools.combinations(names, 2)
        }

        class DecisionBackend:
            backend_id = "decider"

            def complete(self, prompt):
                quoted = [n for n in names if f'"{n}"' in prompt]
                return "YES" if decisions[frozenset(quoted[:2])] else "NO"

        chunkset = make_chunkset([f"text {i}" for i in range(1, 6)])
        _, proposal = disambiguate(
            corpus, chunkset, DecisionBackend(), print_proposal=False
        )
        # oracle: brute-force transitive closure over confirmed pairs
        components = {frozenset({n}) for n in names}
        for pair, same in decisions.items():
            if not same:
                continue
            a, b = tuple(pair)
            ca = next(c for c in components if a in c)
            cb = next(c for c in components if b in c)
            if ca != cb:
                components -= {ca, cb}
                components.add(ca | cb)
        expected = {frozenset(c) for c in components if len(c) >= 2}
        assert {frozenset(ms.names) for ms in proposal.merge_sets} == expected


def test_count_conservation_over_random_merges():
    rng = random.Random(7)
    for _ in range(10):
        spec = {f"Name{i} Clan": rng.randint(1, 12) for i in range(6)}
        corpus = corpus_of(spec)
        groups = [set(rng.sample(list(spec), 2)) for _ in range(2)]
        if groups[0] & groups[1]:
            continue
        refined, _ = disambiguate(
            corpus, make_chunkset(["t"] * 5), None, user_merge_sets=groups
        )
        assert refined.total_count() == corpus.total_count()


def test_idempotence_of_machine_path():
    corpus = corpus_of({"A Smith": 10, "B Smith": 8})
    chunkset = make_chunkset([f"text {i}" for i in range(1, 6)])
    refined, _ = disambiguate(corpus, chunkset, yes_mock(), print_proposal=False)
    again, proposal = disambiguate(refined, chunkset, yes_mock(), print_proposal=False)
    assert again == refined
    assert proposal.merge_sets == ()


def test_canonical_most_annotations_then_longest_then_lexical():
    corpus = corpus_of({"Bee": 5, "Cee": 5, "Ceee": 5, "Dee": 9})
    # most annotations wins; the merged slot keeps the earliest position
    refined0, _ = disambiguate(
        corpus, make_chunkset(["t"] * 5), None, user_merge_sets=[{"Bee", "Dee"}]
    )
    assert refined0.characters() == ["Dee", "Cee", "Ceee"]
    # ties on count: longest name wins
    refined, _ = disambiguate(
        corpus, make_chunkset(["t"] * 5), None, user_merge_sets=[{"Cee", "Ceee"}]
    )
    assert "Ceee" in refined.characters()
    # full tie: lexicographically first
    corpus2 = corpus_of({"Abc": 4, "Abd": 4})
    refined2, _ = disambiguate(
        corpus2, make_chunkset(["t"] * 5), None, user_merge_sets=[{"Abc", "Abd"}]
    )
    assert "Abc" in refined2.characters()


def test_merged_records_keep_chunk_order_and_rename():
    records = [
        Annotation("B", "late", "t", 1, 4),
        Annotation("A", "early", "t", 1, 1),
        Annotation("B", "mid", "t", 1, 2),
        Annotation("A", "also early", "t", 1, 1),
    ]
    corpus = AnnotationCorpus.from_records(records + [Annotation("A", "x", "t", 1, 5)])
    merged = apply_merges(
        corpus, (MergeSet(names=frozenset({"A", "B"}), canonical="A"),)
    )
    recs = merged.records("A")
    assert [r.chunk for r in recs] == sorted(r.chunk for r in recs)
    assert all(r.character == "A" for r in recs)


def test_overlapping_user_merge_sets_rejected():
    corpus = corpus_of({"A": 2, "B": 2, "C": 2})
    with pytest.raises(DisambiguationError):
        disambiguate(
            corpus,
            make_chunkset(["t"]),
            None,
            user_merge_sets=[{"A", "B"}, {"B", "C"}],
        )


def test_proposal_print_format(capsys):
    corpus = corpus_of({"Homer": 5, "Homer Simpson": 9})
    disambiguate(corpus, make_chunkset(["t"] * 5), yes_mock())
    out = capsys.readouterr().out
    assert "Initial pseudonym lists from AI:" in out
    assert '"Homer Simpson" "Homer"' in out
