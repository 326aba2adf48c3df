"""Single entry point exposing every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
standard error; data goes only to the named output files, each accompanied
by a ``<file>.manifest`` sidecar for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .annotator import AnnotateAborted, AnnotateOptions, annotate
from .backends import make_backend
from .chunker import ChunkerConfig, chunk_text
from .disambiguator import disambiguate
from .embeddings import (
    HashEmbeddingBackend,
    HttpEmbeddingBackend,
    embed_characters,
    write_embeddings,
)
from .manifest import write_manifest
from .model import (
    RatingScale,
    read_chunks,
    read_corpus,
    replay_eval_records,
    trait_specs_from_dict,
    write_chunks,
    write_corpus,
)
from .review import DEFAULT_LABELS, DEFAULT_SAMPLE_SIZE, ReviewSession
from .server import serve_review
from .stats import (
    chi_square_independence,
    compute_statistics,
    pearson,
)
from .svgplot import emit_summary_plot
from .tokens import DEFAULT_TOKENIZER_ID

log = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="charannot", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=f"charannot {__version__} (tokenizer {DEFAULT_TOKENIZER_ID})",
    )
    parser.add_argument("--config", help="TOML or JSON file mirroring the flags")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("chunk", help="split a text file into annotation chunks")
    p.add_argument("--in", dest="input", required=True, help="plain-text input file")
    p.add_argument("--out", required=True, help="chunk JSON output file")
    p.add_argument("--target-tokens", type=int, default=500)
    p.add_argument("--context-sentences", type=int, default=3)
    p.add_argument("--splitter", default=None, help="custom splitting string")
    p.add_argument("--tokenizer", default=DEFAULT_TOKENIZER_ID)

    p = sub.add_parser("annotate", help="annotate character behaviors per chunk")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--traits", help="JSON trait definitions file")
    p.add_argument("--scale", help="comma-separated rating scale, e.g. -3,-2,-1,0,1,2,3")
    p.add_argument("--book-title")
    p.add_argument("--targets", help="comma-separated character names to keep")
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--backend", choices=("mock", "http"), default="http")
    p.add_argument("--mock-script", help="JSON script file for the mock backend")
    p.add_argument("--checkpoint", help="checkpoint file for resumable runs")
    p.add_argument("--resume", action="store_true")

    p = sub.add_parser("disambiguate", help="merge pseudonymous character names")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--merge-lists", help="JSON list of name lists; skips all LLM calls")
    p.add_argument("--proposal", help="where to write the machine-readable proposal")
    p.add_argument("--window", type=int, default=3)
    p.add_argument("--all-pairs", action="store_true", help="test every name pair")
    p.add_argument("--backend", choices=("mock", "http"), default="http")
    p.add_argument("--mock-script")

    p = sub.add_parser("review", help="serve the human review UI and API")
    p.add_argument("--annotations", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--eval", dest="eval_path", required=True, help="eval JSONL store")
    p.add_argument("--labels", default=",".join(DEFAULT_LABELS))
    p.add_argument("--n", type=int, default=DEFAULT_SAMPLE_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--port", type=int, default=8174)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="directory of built UI assets")

    p = sub.add_parser("stats", help="character-level statistics")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="also write a summary SVG here")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--traits", help="two trait names for the scatter plot: a,b")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("analyze", help="inferential statistics")
    analyze_sub = p.add_subparsers(dest="analysis", metavar="analysis")
    pc = analyze_sub.add_parser("corr", help="correlate two trait means across characters")
    pc.add_argument("--stats", required=True, help="stats JSON from the stats command")
    pc.add_argument("--traits", required=True, help="two trait names: a,b")
    pc.add_argument("--top", type=int, default=10)
    pc.add_argument("--out", help="write the result JSON here (default: stdout)")
    px = analyze_sub.add_parser("chisq", help="compare label distributions of eval files")
    px.add_argument("--evals", nargs="+", required=True, help="two or more eval JSONL files")
    px.add_argument("--out", help="write the result JSON here (default: stdout)")

    p = sub.add_parser("embed", help="character embeddings from annotation profiles")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("test", "http"), default="test")
    p.add_argument("--dim", type=int, default=64, help="test backend dimension")

    return parser


# ---------------------------------------------------------------------------
# Config file support
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError as exc:  # Python 3.10
            raise UsageError(
                "TOML config requires Python >= 3.11; use a JSON config instead"
            ) from exc
        return tomllib.loads(raw.decode("utf-8"))
    return json.loads(raw.decode("utf-8"))


def _apply_config(parser: _Parser, argv: list[str]) -> None:
    """Seed subparser defaults from --config (explicit flags still win)."""
    if "--config" not in argv:
        return
    config_path = argv[argv.index("--config") + 1]
    config = _load_config(config_path)
    subparsers = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    for name, subparser in subparsers.choices.items():
        section = dict(config.get(name, {}))
        valid = {a.dest for a in subparser._actions}
        defaults = {
            k.replace("-", "_"): v
            for k, v in section.items()
            if k.replace("-", "_") in valid
        }
        if defaults:
            subparser.set_defaults(**defaults)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def _comma_list(raw: str | None) -> tuple[str, ...] | None:
    if raw is None:
        return None
    items = tuple(part.strip() for part in raw.split(",") if part.strip())
    return items or None


def _cmd_chunk(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    config = ChunkerConfig(
        target_tokens=args.target_tokens,
        context_sentences=args.context_sentences,
        custom_splitter=args.splitter,
        tokenizer_id=args.tokenizer,
    )
    chunkset = chunk_text(text, config)
    write_chunks(chunkset, args.out)
    write_manifest(
        args.out,
        "chunk",
        {
            "target_tokens": config.target_tokens,
            "context_sentences": config.context_sentences,
            "custom_splitter": config.custom_splitter,
            "tokenizer_id": config.tokenizer_id,
        },
        [args.input],
        tokenizer_id=config.tokenizer_id,
    )
    log.info("wrote %d chunks to %s", len(chunkset), args.out)
    return 0


def _make_completion_backend(args):
    return make_backend(args.backend, mock_script=args.mock_script)


def _cmd_annotate(args) -> int:
    chunkset = read_chunks(args.chunks)
    traits = None
    if args.traits:
        traits = trait_specs_from_dict(
            json.loads(Path(args.traits).read_text(encoding="utf-8"))
        )
    scale = None
    if args.scale:
        scale = RatingScale.of(int(v) for v in args.scale.split(","))
    options = AnnotateOptions(
        traits=traits,
        rating_scale=scale,
        book_title=args.book_title,
        target_characters=_comma_list(args.targets),
        parallelism=args.parallel,
    )
    backend = _make_completion_backend(args)
    try:
        result = annotate(
            chunkset,
            backend,
            options,
            checkpoint_path=args.checkpoint,
            resume=args.resume,
        )
    except AnnotateAborted as exc:
        raise RuntimeError(
            f"{exc} — rerun with --resume --checkpoint {args.checkpoint} to continue"
            if args.checkpoint
            else str(exc)
        ) from exc
    write_corpus(result.corpus, args.out)
    inputs = [args.chunks] + [p for p in (args.traits, args.mock_script) if p]
    write_manifest(
        args.out,
        "annotate",
        {
            "traits": args.traits,
            "scale": args.scale,
            "book_title": args.book_title,
            "targets": args.targets,
            "parallel": args.parallel,
            "backend": args.backend,
        },
        inputs,
        backend_id=backend.backend_id,
    )
    if result.skipped_chunks:
        log.warning("skipped chunks (unparseable after retry): %s", list(result.skipped_chunks))
    log.info(
        "wrote %d annotations for %d characters to %s (clamped ratings: %d)",
        result.corpus.total_count(),
        len(result.corpus.characters()),
        args.out,
        result.clamped_ratings,
    )
    return 0


def _cmd_disambiguate(args) -> int:
    corpus = read_corpus(args.annotations)
    chunkset = read_chunks(args.chunks)
    merge_lists = None
    backend = None
    if args.merge_lists:
        raw = json.loads(Path(args.merge_lists).read_text(encoding="utf-8"))
        merge_lists = [set(map(str, group)) for group in raw]
    else:
        backend = _make_completion_backend(args)
    refined, proposal = disambiguate(
        corpus,
        chunkset,
        backend,
        user_merge_sets=merge_lists,
        window=args.window,
        all_pairs=args.all_pairs,
    )
    write_corpus(refined, args.out)
    proposal_path = args.proposal or (args.out + ".proposal.json")
    proposal_doc = {
        "merge_sets": [
            {"names": sorted(ms.names), "canonical": ms.canonical}
            for ms in proposal.merge_sets
        ],
        "evidence": {
            f"{a} || {b}": list(chunks) for (a, b), chunks in proposal.evidence.items()
        },
    }
    Path(proposal_path).write_text(
        json.dumps(proposal_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    inputs = [args.annotations, args.chunks] + [
        p for p in (args.merge_lists, args.mock_script) if p
    ]
    write_manifest(
        args.out,
        "disambiguate",
        {
            "merge_lists": args.merge_lists,
            "window": args.window,
            "all_pairs": args.all_pairs,
            "backend": args.backend if backend is not None else None,
        },
        inputs,
        backend_id=backend.backend_id if backend is not None else None,
    )
    log.info(
        "wrote refined annotations to %s (%d merge sets; proposal: %s)",
        args.out,
        len(proposal.merge_sets),
        proposal_path,
    )
    return 0


def _cmd_review(args) -> int:
    corpus = read_corpus(args.annotations)
    chunkset = read_chunks(args.chunks)
    labels = _comma_list(args.labels)
    if not labels:
        raise UsageError("--labels must name at least one label")
    session = ReviewSession(
        corpus,
        chunkset,
        args.eval_path,
        labels=labels,
        sample_size=args.n,
        seed=args.seed,
    )
    server = serve_review(session, (args.host, args.port), ui_dir=args.ui)
    host, port = server.server_address[:2]
    print(f"Review service on http://{host}:{port}/ — Ctrl-C to stop", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_stats(args) -> int:
    corpus = read_corpus(args.annotations)
    stats = compute_statistics(corpus, reps=args.reps, seed=args.seed)
    payload = json.dumps([s.to_dict() for s in stats], ensure_ascii=False, indent=2)
    Path(args.out).write_text(payload + "\n", encoding="utf-8")
    config = {"top": args.top, "traits": args.traits, "reps": args.reps, "seed": args.seed}
    write_manifest(
        args.out, "stats", config, [args.annotations], seeds={"bootstrap": args.seed}
    )
    if args.plot:
        traits = _comma_list(args.traits)
        if traits is not None and len(traits) != 2:
            raise UsageError("--traits must name exactly two traits for the scatter plot")
        emit_summary_plot(stats, args.plot, top_n=args.top, traits=traits)
        write_manifest(
            args.plot, "stats", config, [args.annotations], seeds={"bootstrap": args.seed}
        )
        log.info("wrote plot to %s", args.plot)
    log.info("wrote statistics for %d characters to %s", len(stats), args.out)
    return 0


def _emit_result(doc: dict, out: str | None) -> None:
    payload = json.dumps(doc, ensure_ascii=False, indent=2)
    if out:
        Path(out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)


def _cmd_analyze_corr(args) -> int:
    traits = _comma_list(args.traits)
    if traits is None or len(traits) != 2:
        raise UsageError("--traits must name exactly two traits: a,b")
    trait_x, trait_y = traits
    stats = json.loads(Path(args.stats).read_text(encoding="utf-8"))
    xs, ys, used = [], [], []
    for entry in stats:
        scores = entry.get("trait_scores") or {}
        if trait_x in scores and trait_y in scores:
            xs.append(scores[trait_x]["mean"])
            ys.append(scores[trait_y]["mean"])
            used.append(entry["character"])
        if len(used) == args.top:
            break
    if len(used) < 3:
        raise RuntimeError(
            f"only {len(used)} characters carry scores for both traits; "
            "need at least 3 (run the stats command on a numeric-scale corpus)"
        )
    result = pearson(xs, ys)
    _emit_result(
        {
            "traits": [trait_x, trait_y],
            "characters": used,
            "n": len(used),
            "r": result.r,
            "df": result.df,
            "p_two_tailed": result.p_two_tailed,
        },
        args.out,
    )
    return 0


def _cmd_analyze_chisq(args) -> int:
    if len(args.evals) < 2:
        raise UsageError("chisq needs at least two eval files")
    replays = [replay_eval_records(path) for path in args.evals]
    labels: list[str] = []
    for records in replays:
        for rec in records:
            if rec.label not in labels:
                labels.append(rec.label)
    table = [
        [sum(rec.label == label for rec in records) for label in labels]
        for records in replays
    ]
    result = chi_square_independence(table)
    _emit_result(
        {
            "files": list(args.evals),
            "labels": labels,
            "table": table,
            "chi2": result.chi2,
            "df": result.df,
            "p": result.p,
        },
        args.out,
    )
    return 0


def _cmd_embed(args) -> int:
    corpus = read_corpus(args.annotations)
    if args.backend == "test":
        backend = HashEmbeddingBackend(dimension=args.dim)
    else:
        backend = HttpEmbeddingBackend()
    vectors = embed_characters(corpus, backend)
    write_embeddings(vectors, args.out)
    write_manifest(
        args.out,
        "embed",
        {"backend": args.backend, "dim": args.dim},
        [args.annotations],
        backend_id=backend.backend_id,
    )
    log.info("wrote %d embeddings to %s", len(vectors), args.out)
    return 0


_DISPATCH = {
    "chunk": _cmd_chunk,
    "annotate": _cmd_annotate,
    "disambiguate": _cmd_disambiguate,
    "review": _cmd_review,
    "stats": _cmd_stats,
    "embed": _cmd_embed,
}


def _join_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--scale -3,-2,...`` to ``--scale=-3,-2,...`` so argparse does
    not mistake a leading negative rating for an option."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if (
            token == "--scale"
            and i + 1 < len(argv)
            and argv[i + 1].startswith("-")
            and len(argv[i + 1]) > 1
            and argv[i + 1][1].isdigit()
        ):
            out.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        out.append(token)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = _build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "analyze":
            if args.analysis == "corr":
                return _cmd_analyze_corr(args)
            if args.analysis == "chisq":
                return _cmd_analyze_chisq(args)
            parser.print_usage(sys.stderr)
            return 1
        return _DISPATCH[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (KeyboardInterrupt, BrokenPipeError):
        return 2
    except Exception as exc:  # runtime failures exit 2 with a diagnostic
        print(f"error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
