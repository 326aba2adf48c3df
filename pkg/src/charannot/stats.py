"""Character-level summary statistics and the classical tests used to
compare annotation runs.

Mean-score intervals are seeded percentile bootstraps (the output labels them
"bootstrap interval" — no analytic posterior is claimed). The Pearson and
chi-square p-values run on the package's own incomplete beta/gamma
implementations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import AnnotationCorpus
from .special import chi2_sf, student_t_p_two_tailed

log = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_REPS = 10_000


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class TraitScore:
    mean: float
    ci_low: float
    ci_high: float
    n: int
    interval_kind: str = "bootstrap interval"


@dataclass(frozen=True)
class CharacterStats:
    character: str
    total: int
    trait_counts: dict[str, int]  # descending count, ties alphabetical
    trait_scores: dict[str, TraitScore] | None = None

    def to_dict(self) -> dict:
        doc = {
            "character": self.character,
            "total": self.total,
            "traits": [
                {"trait": trait, "count": count}
                for trait, count in self.trait_counts.items()
            ],
        }
        if self.trait_scores is not None:
            doc["trait_scores"] = {
                trait: {
                    "mean": score.mean,
                    "ci_low": score.ci_low,
                    "ci_high": score.ci_high,
                    "n": score.n,
                    "interval": score.interval_kind,
                }
                for trait, score in self.trait_scores.items()
            }
        return doc


def character_counts(corpus: AnnotationCorpus) -> list[CharacterStats]:
    """Per-character totals and trait counts, descending by total.

    Characters with equal totals keep their corpus (first-appearance) order;
    traits with equal counts sort alphabetically.
    """
    stats = []
    for name in corpus.characters():
        records = corpus.records(name)
        counts: dict[str, int] = {}
        for rec in records:
            counts[rec.trait] = counts.get(rec.trait, 0) + 1
        ordered = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
        stats.append(
            CharacterStats(character=name, total=len(records), trait_counts=ordered)
        )
    stats.sort(key=lambda s: -s.total)
    return stats


def mean_trait_score(
    corpus: AnnotationCorpus,
    character: str,
    trait: str,
    *,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
    mass: float = 0.95,
) -> TraitScore:
    """Mean rating with a seeded percentile-bootstrap credible interval."""
    if character not in corpus.by_character:
        raise StatsError(f"no such character: {character!r}")
    ratings = [rec.rating for rec in corpus.records(character) if rec.trait == trait]
    if not ratings:
        raise StatsError(f"character {character!r} has no ratings for trait {trait!r}")
    data = np.asarray(ratings, dtype=float)
    mean = float(data.mean())
    if len(ratings) == 1:
        log.warning(
            "single observation for (%s, %s): degenerate interval", character, trait
        )
        return TraitScore(mean=mean, ci_low=mean, ci_high=mean, n=1)
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, len(data), size=(reps, len(data)))
    means = np.sort(data[indices].mean(axis=1))
    lo = _linear_percentile(means, (1 - mass) / 2)
    hi = _linear_percentile(means, (1 + mass) / 2)
    return TraitScore(mean=mean, ci_low=lo, ci_high=hi, n=len(ratings))


def _linear_percentile(sorted_values: np.ndarray, q: float) -> float:
    """Classical linear interpolation at rank (n-1)*q over sorted values."""
    h = (len(sorted_values) - 1) * q
    low = math.floor(h)
    high = math.ceil(h)
    a = float(sorted_values[low])
    b = float(sorted_values[high])
    return a + (h - low) * (b - a)


def corpus_is_numeric(corpus: AnnotationCorpus) -> bool:
    """Heuristic: presence-only corpora carry nothing but rating 1."""
    return any(rec.rating != 1 for rec in corpus.flatten())


def compute_statistics(
    corpus: AnnotationCorpus,
    *,
    include_scores: bool | None = None,
    reps: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
    mass: float = 0.95,
) -> list[CharacterStats]:
    """Counts for every character, plus trait score intervals when numeric."""
    if include_scores is None:
        include_scores = corpus_is_numeric(corpus)
    stats = character_counts(corpus)
    if not include_scores:
        return stats
    out = []
    for entry in stats:
        scores = {
            trait: mean_trait_score(
                corpus, entry.character, trait, reps=reps, seed=seed, mass=mass
            )
            for trait in entry.trait_counts
        }
        out.append(
            CharacterStats(
                character=entry.character,
                total=entry.total,
                trait_counts=entry.trait_counts,
                trait_scores=scores,
            )
        )
    return out


@dataclass(frozen=True)
class PearsonResult:
    r: float
    p_two_tailed: float
    df: int


def correlation_p_value(r: float, n: int) -> float:
    """Two-tailed p for a sample correlation via the exact t transform."""
    if n < 3:
        raise StatsError("correlation p-value needs n >= 3")
    if not -1.0 <= r <= 1.0:
        raise StatsError(f"correlation must be in [-1, 1], got {r}")
    df = n - 2
    denom = 1.0 - r * r
    if denom <= 0.0:
        return 0.0
    t = abs(r) * math.sqrt(df / denom)
    return student_t_p_two_tailed(t, df)


def pearson(xs, ys) -> PearsonResult:
    """Sample Pearson correlation with its two-tailed p-value."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    n = len(xs)
    if n != len(ys):
        raise StatsError(f"length mismatch: {n} vs {len(ys)}")
    if n < 3:
        raise StatsError("pearson needs at least 3 observations")
    mx = sum(xs) / n
    my = sum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise StatsError("correlation undefined: an input has zero variance")
    r = sum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return PearsonResult(r=r, p_two_tailed=correlation_p_value(r, n), df=n - 2)


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    df: int
    p: float


def chi_square_independence(table) -> ChiSquareResult:
    """Pearson chi-square test of independence on an r x k count table."""
    rows = [list(map(float, row)) for row in table]
    if len(rows) < 2 or any(len(row) != len(rows[0]) for row in rows):
        raise StatsError("table must be rectangular with at least 2 rows")
    if len(rows[0]) < 2:
        raise StatsError("table needs at least 2 columns")
    if any(cell < 0 for row in rows for cell in row):
        raise StatsError("counts must be non-negative")
    row_sums = [sum(row) for row in rows]
    col_sums = [sum(col) for col in zip(*rows)]
    total = sum(row_sums)
    if any(s == 0 for s in row_sums) or any(s == 0 for s in col_sums):
        raise StatsError("zero row or column marginal; expected counts undefined")
    chi2 = 0.0
    for i, row in enumerate(rows):
        for j, observed in enumerate(row):
            expected = row_sums[i] * col_sums[j] / total
            chi2 += (observed - expected) ** 2 / expected
    df = (len(rows) - 1) * (len(rows[0]) - 1)
    return ChiSquareResult(chi2=chi2, df=df, p=chi2_sf(chi2, df))


def chi_square_p_value(chi2: float, df: int) -> float:
    return chi2_sf(chi2, df)
