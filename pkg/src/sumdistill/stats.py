"""Human-study arithmetic: Mann-Whitney z-tests, Likert descriptives, preference tallies, sample size."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

ZCRIT_ONE_TAILED = 1.645  # 5% one-tailed critical value

LIKERT_QUESTIONS = ("accurate", "complete", "concise")
# The completeness and conciseness questions are negatively worded, so lower
# scores are better for them.
LOWER_IS_BETTER = ("complete", "concise")


class StatsError(ValueError):
    """Invalid samples or mismatched inputs."""


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0  # average of positions i..j, 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


@dataclass
class MWResult:
    u: float
    z: float
    p: float
    n1: int
    n2: int
    sigma: float  # tie-corrected standard deviation of U


def mann_whitney(a: Sequence[float], b: Sequence[float]) -> MWResult:
    """Mann-Whitney U for sample a, with midranks for ties.

    z = (U - n1*n2/2) / sigma with the tie-corrected sigma; the one-tailed p
    is the lower-tail normal probability of z.
    """
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise StatsError("both samples must be nonempty")
    pooled = list(a) + list(b)
    ranks = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u = r1 - n1 * (n1 + 1) / 2.0

    n = n1 + n2
    tie_sum = 0.0
    seen: dict[float, int] = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    for t in seen.values():
        tie_sum += t**3 - t
    correction = (n + 1) - tie_sum / (n * (n - 1)) if n > 1 else 0.0
    sigma = math.sqrt(n1 * n2 / 12.0 * correction) if correction > 0 else 0.0

    if sigma == 0.0:
        z = 0.0
    else:
        z = (u - n1 * n2 / 2.0) / sigma
    return MWResult(u=u, z=z, p=_norm_cdf(z), n1=n1, n2=n2, sigma=sigma)


@dataclass
class LikertSample:
    ratings: list[int]
    question_id: str = "accurate"

    def __post_init__(self) -> None:
        if self.question_id not in LIKERT_QUESTIONS:
            raise StatsError(f"unknown question id {self.question_id!r}")


def likert_summary(s: LikertSample) -> dict[str, float]:
    """Median and mean (two decimals) of 1..4 agreement ratings."""
    if not s.ratings:
        raise StatsError("empty Likert sample")
    for r in s.ratings:
        if r not in (1, 2, 3, 4):
            raise StatsError(f"rating {r} out of range 1..4")
    ordered = sorted(s.ratings)
    n = len(ordered)
    if n % 2 == 1:
        median = float(ordered[n // 2])
    else:
        median = (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    mean = round(sum(ordered) / n, 2)
    return {"median": median, "mean": mean}


@dataclass
class PreferenceChoice:
    """One rater's answer on the comparison page, with the display assignment."""

    choice: str  # first | second | undecided
    first_source: str
    second_source: str

    def preferred_source(self) -> str:
        if self.choice == "first":
            return self.first_source
        if self.choice == "second":
            return self.second_source
        if self.choice == "undecided":
            return "undecided"
        raise StatsError(f"unknown choice {self.choice!r}")


@dataclass
class PreferenceTally:
    counts: dict[str, int]
    total: int

    def percent(self, source: str) -> float:
        return 100.0 * self.counts.get(source, 0) / self.total

    @property
    def percentages(self) -> dict[str, float]:
        return {k: self.percent(k) for k in self.counts}


def preference_tally(choices: Sequence[PreferenceChoice]) -> PreferenceTally:
    """Resolve positional choices back to source labels and tally them."""
    if not choices:
        raise StatsError("no preference choices")
    counts: dict[str, int] = {}
    for c in choices:
        src = c.preferred_source()
        counts[src] = counts.get(src, 0) + 1
    return PreferenceTally(counts=counts, total=len(choices))


def convergence_rate(study1: Mapping[str, str], study2: Mapping[str, str]) -> float:
    """Fraction of ids whose preferred source agrees between two studies."""
    if set(study1) != set(study2):
        diff = sorted(set(study1) ^ set(study2))
        raise StatsError(f"studies rate different ids: {diff[:5]}")
    if not study1:
        raise StatsError("empty studies")
    agree = sum(1 for k in study1 if study1[k] == study2[k])
    return agree / len(study1)


def sample_size(population: int, precision: float) -> int:
    """Minimum sample size n = ceil(N / (1 + N * e^2))."""
    if population < 1:
        raise StatsError("population must be >= 1")
    if not 0.0 <= precision < 1.0:
        raise StatsError(f"precision must be in [0, 1), got {precision}")
    x = population / (1.0 + population * precision * precision)
    return math.ceil(x - 1e-9)


# ---------------------------------------------------------------------------
# Study report over exported survey responses.
# ---------------------------------------------------------------------------


@dataclass
class StudyStats:
    sources: list[str]
    likert: dict[str, dict[str, dict[str, float]]]  # question -> source -> {median, mean}
    tests: dict[str, MWResult]  # question -> MW of first source vs second
    tally: PreferenceTally
    n_responses: int = 0
    preferred_by_method: dict[str, str] = field(default_factory=dict)


def analyze_study(records: Iterable[Mapping]) -> StudyStats:
    """Aggregate exported survey responses into the study's statistics.

    Each record carries the rated source's three Likert answers plus the
    resolved preference. Page-one ratings group by rated_source; the
    Mann-Whitney test compares the two sources per question.
    """
    records = list(records)
    if not records:
        raise StatsError("no responses to analyze")
    ratings: dict[str, dict[str, list[int]]] = {q: {} for q in LIKERT_QUESTIONS}
    choices: list[PreferenceChoice] = []
    by_method_counts: dict[str, dict[str, int]] = {}
    for rec in records:
        src = rec["rated_source"]
        for q in LIKERT_QUESTIONS:
            ratings[q].setdefault(src, []).append(int(rec[q]))
        choices.append(
            PreferenceChoice(
                choice=rec["preference"],
                first_source=rec["first_source"],
                second_source=rec["second_source"],
            )
        )
        preferred = choices[-1].preferred_source()
        method_counts = by_method_counts.setdefault(rec["method_id"], {})
        method_counts[preferred] = method_counts.get(preferred, 0) + 1

    sources = sorted({s for q in ratings.values() for s in q})
    likert = {
        q: {src: likert_summary(LikertSample(vals, question_id=q)) for src, vals in per_source.items()}
        for q, per_source in ratings.items()
    }
    tests: dict[str, MWResult] = {}
    if len(sources) == 2:
        s1, s2 = sources
        for q in LIKERT_QUESTIONS:
            if s1 in ratings[q] and s2 in ratings[q]:
                tests[q] = mann_whitney(ratings[q][s1], ratings[q][s2])
    preferred_by_method = {
        mid: max(sorted(counts), key=lambda s: counts[s]) for mid, counts in by_method_counts.items()
    }
    return StudyStats(
        sources=sources,
        likert=likert,
        tests=tests,
        tally=preference_tally(choices),
        n_responses=len(records),
        preferred_by_method=preferred_by_method,
    )


def render_study_report(stats: StudyStats) -> str:
    """Text table: med/mean per source, Zobs, Zcrit, p per question, then the preference tally."""
    lines = []
    header = ["question".ljust(10)]
    for src in stats.sources:
        header.append(f"{src} med/mean".rjust(18))
    header.extend(["Zobs".rjust(8), "Zcrit".rjust(7), "p".rjust(7)])
    lines.append(" | ".join(header))
    for q in LIKERT_QUESTIONS:
        row = [(q + ("*" if q in LOWER_IS_BETTER else "")).ljust(10)]
        for src in stats.sources:
            summary = stats.likert.get(q, {}).get(src)
            cell = "-" if summary is None else f"{summary['median']:g}/{summary['mean']:.2f}"
            row.append(cell.rjust(18))
        test = stats.tests.get(q)
        if test is None:
            row.extend(["-".rjust(8), "-".rjust(7), "-".rjust(7)])
        else:
            p_text = "<0.01" if test.p < 0.01 else f"{test.p:.3f}"
            row.extend([f"{test.z:.3f}".rjust(8), f"{ZCRIT_ONE_TAILED:.3f}".rjust(7), p_text.rjust(7)])
        lines.append(" | ".join(row))
    lines.append("* lower is better (question wording)")
    lines.append("")
    lines.append(f"preference over {stats.tally.total} comparisons:")
    for src in sorted(stats.tally.counts):
        lines.append(f"  {src}: {stats.tally.counts[src]} ({stats.tally.percent(src):.1f}%)")
    return "\n".join(lines) + "\n"
