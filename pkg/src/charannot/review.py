"""Human-in-the-loop review: sampling, Bayesian quality statistics, and the
append-only eval session.

Label proportions get equal-tailed credible intervals from a Beta posterior
with a uniform prior (count vs. rest per label). When every label parses as
an integer the report additionally compares human ratings with the model's
(exact-match rate and mean absolute deviation).
"""

from __future__ import annotations

import datetime
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .model import (
    Annotation,
    AnnotationCorpus,
    ChunkSet,
    EvalRecord,
    SchemaError,
    append_eval_record,
    append_eval_tombstone,
    replay_eval_records,
)
from .special import beta_ppf

log = logging.getLogger(__name__)

DEFAULT_LABELS = ("Correct", "Questionable", "Incorrect")
DEFAULT_SAMPLE_SIZE = 100


class ReviewError(ValueError):
    pass


def sample_annotations(
    corpus: AnnotationCorpus, sample_size: int, seed: int
) -> list[Annotation]:
    """Seeded uniform sample without replacement over the flattened corpus.

    Flattening order is character first-appearance order, then list order.
    Asking for more than the total returns everything in shuffled order.
    """
    if sample_size < 1:
        raise ReviewError("sample_size must be >= 1")
    flat = corpus.flatten()
    if not flat:
        raise ReviewError("cannot sample from an empty corpus")
    rng = random.Random(seed)
    if sample_size > len(flat):
        log.warning(
            "sample_size %d exceeds corpus size %d; reviewing all annotations",
            sample_size,
            len(flat),
        )
        sample_size = len(flat)
    return rng.sample(flat, sample_size)


def beta_credible_interval(k: int, n: int, mass: float = 0.95) -> tuple[float, float]:
    """Equal-tailed credible interval of Beta(k+1, n-k+1) (uniform prior)."""
    if n < 1:
        raise ReviewError("n must be >= 1")
    if not 0 <= k <= n:
        raise ReviewError(f"k must be in [0, n], got k={k}, n={n}")
    if not 0.0 < mass < 1.0:
        raise ReviewError(f"mass must be in (0, 1), got {mass}")
    a, b = k + 1, n - k + 1
    lower = (1.0 - mass) / 2.0
    return beta_ppf(lower, a, b), beta_ppf(1.0 - lower, a, b)


@dataclass(frozen=True)
class LabelStats:
    label: str
    count: int
    proportion: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class QualityReport:
    n: int
    per_label: tuple[LabelStats, ...]
    mass: float
    exact_match_rate: float | None = None
    mean_abs_deviation: float | None = None

    @property
    def numeric_mode(self) -> bool:
        return self.exact_match_rate is not None

    def to_dict(self) -> dict:
        doc = {
            "n": self.n,
            "mass": self.mass,
            "labels": [
                {
                    "label": ls.label,
                    "count": ls.count,
                    "proportion": ls.proportion,
                    "ci_low": ls.ci_low,
                    "ci_high": ls.ci_high,
                }
                for ls in self.per_label
            ],
        }
        if self.numeric_mode:
            doc["exact_match_rate"] = self.exact_match_rate
            doc["mean_abs_deviation"] = self.mean_abs_deviation
        return doc


def _numeric_labels(labels: tuple[str, ...]) -> dict[str, int] | None:
    try:
        return {label: int(label) for label in labels}
    except ValueError:
        return None


def quality_report(
    records: list[EvalRecord],
    labels: tuple[str, ...] = DEFAULT_LABELS,
    mass: float = 0.95,
) -> QualityReport:
    """Per-label proportions with credible intervals over the eval records."""
    if not records:
        raise ReviewError("cannot build a quality report from zero records")
    if len(set(labels)) != len(labels) or not labels:
        raise ReviewError("labels must be non-empty and distinct")
    counts = {label: 0 for label in labels}
    for rec in records:
        if rec.label not in counts:
            raise ReviewError(f"record carries unknown label {rec.label!r}")
        counts[rec.label] += 1
    n = len(records)
    per_label = []
    for label, count in counts.items():
        ci_low, ci_high = beta_credible_interval(count, n, mass)
        per_label.append(
            LabelStats(
                label=label,
                count=count,
                proportion=count / n,
                ci_low=ci_low,
                ci_high=ci_high,
            )
        )
    per_label = tuple(per_label)
    exact = mad = None
    numeric = _numeric_labels(labels)
    if numeric is not None:
        deviations = [abs(numeric[rec.label] - rec.llm_rating) for rec in records]
        exact = sum(d == 0 for d in deviations) / n
        mad = sum(deviations) / n
    return QualityReport(
        n=n,
        per_label=per_label,
        mass=mass,
        exact_match_rate=exact,
        mean_abs_deviation=mad,
    )


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class ReviewSession:
    """One rater working through a seeded sample, persisted append-only.

    Restarting with the same eval file resumes at the replayed progress;
    undo appends a tombstone line rather than rewriting history.
    """

    def __init__(
        self,
        corpus: AnnotationCorpus,
        chunkset: ChunkSet,
        eval_path: str | Path,
        labels: tuple[str, ...] = DEFAULT_LABELS,
        sample_size: int = DEFAULT_SAMPLE_SIZE,
        seed: int = 0,
    ):
        if not labels or len(set(labels)) != len(labels):
            raise ReviewError("labels must be non-empty and distinct")
        self.corpus = corpus
        self.chunkset = chunkset
        self.eval_path = Path(eval_path)
        self.labels = tuple(labels)
        self.seed = seed
        self.sample = sample_annotations(corpus, sample_size, seed)
        self.sample_size = len(self.sample)
        replayed = replay_eval_records(self.eval_path)
        if len(replayed) > self.sample_size:
            raise SchemaError(
                f"eval store holds {len(replayed)} records but the sample has "
                f"only {self.sample_size}"
            )
        self.progress = len(replayed)

    @property
    def done(self) -> bool:
        return self.progress >= self.sample_size

    def current_item(self) -> dict | None:
        """The next unreviewed sampled annotation with its chunk context."""
        if self.done:
            return None
        rec = self.sample[self.progress]
        chunk_text = self.chunkset.chunks.get(rec.chunk, "")
        return {
            "sampled_index": self.progress,
            "character": rec.character,
            "action": rec.action,
            "trait": rec.trait,
            "llm_rating": rec.rating,
            "chunk_index": rec.chunk,
            "chunk_text": chunk_text,
            "overlap_context": self.chunkset.overlap_prefix(rec.chunk)
            if rec.chunk in self.chunkset.chunks
            else "",
        }

    def submit_label(self, label: str) -> int:
        if self.done:
            raise ReviewError("session already complete")
        if label not in self.labels:
            raise ReviewError(
                f"label {label!r} is not one of {list(self.labels)}"
            )
        rec = self.sample[self.progress]
        append_eval_record(
            self.eval_path,
            EvalRecord(
                character=rec.character,
                chunk=rec.chunk,
                action=rec.action,
                trait=rec.trait,
                llm_rating=rec.rating,
                label=label,
                sampled_index=self.progress,
                timestamp=_utc_now(),
            ),
        )
        self.progress += 1
        return self.progress

    def undo(self) -> int:
        if self.progress == 0:
            raise ReviewError("nothing to undo")
        append_eval_tombstone(self.eval_path, _utc_now())
        self.progress -= 1
        return self.progress

    def report(self, mass: float = 0.95) -> QualityReport:
        if not self.done:
            raise ReviewError(
                f"review incomplete: {self.progress}/{self.sample_size} labeled"
            )
        return quality_report(replay_eval_records(self.eval_path), self.labels, mass)
