"""Loading of rating tables and construction of per-task agreement multigraphs.

Two raters agree on a task when their ratings are close in *percentile*
terms rather than in absolute value: the rule adapts to non-uniform rating
distributions.  The percentile table is computed once from the whole pool
of retained answers for a dimension, and every ordered rater pair within a
task receives a binary agreement indicator.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

# Rating scale (inclusive bounds) per affective dimension.
DIMENSION_SCALES = {
    "valence": (1.0, 9.0),
    "arousal": (1.0, 9.0),
    "dominance": (1.0, 9.0),
    "likeness": (1.0, 7.0),
}

DIMENSIONS = tuple(DIMENSION_SCALES)

# Continuous slider ratings are binned to this many decimals before any
# percentile computation, so that "the next rating value" is well defined.
BIN_DECIMALS = 1

DEFAULT_DELTA = 0.2
DEFAULT_MIN_RATERS = 4


@dataclass
class ResponseRow:
    subject_id: str
    task_id: str
    scores: dict  # dimension name -> float rating
    view_seconds: float | None = None
    label_seconds: float | None = None


@dataclass
class ResponseTable:
    """Raw per-(subject, task) ordinal ratings, at most one row per pair."""

    rows: list

    def subjects(self):
        return sorted({r.subject_id for r in self.rows})

    def task_ids(self):
        return sorted({r.task_id for r in self.rows})

    def rows_for(self, dimension):
        """Rows that carry a rating for `dimension`."""
        return [r for r in self.rows if r.scores.get(dimension) is not None]


@dataclass
class PercentileTable:
    """Cumulative rating fractions over a discrete support.

    ``cdf[v]`` is the fraction of the pool with rating <= v (inclusive, so
    the maximum support value maps to exactly 1.0).  ``value_after(v)``
    steps to the next support value; one step past the top of the scale
    carries full cumulative mass.
    """

    dimension: str
    support: list
    cdf: dict
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self._index = {v: i for i, v in enumerate(self.support)}

    def cum(self, value):
        if value not in self._index:
            raise ValueError(f"rating {value!r} not in the {self.dimension or 'rating'} support")
        return self.cdf[value]

    def cum_after(self, value):
        """Cumulative fraction at the support value following `value`."""
        i = self._index.get(value)
        if i is None:
            raise ValueError(f"rating {value!r} not in the {self.dimension or 'rating'} support")
        if i + 1 >= len(self.support):
            return 1.0
        return self.cdf[self.support[i + 1]]


@dataclass
class TaskGraph:
    """Agreement indicators for one task over its ordered rater list.

    ``edges[a, b]`` is the indicator for the ordered pair
    (subjects[a], subjects[b]); the diagonal is unused and kept at zero.
    """

    task_id: str
    subjects: list
    edges: np.ndarray

    @property
    def n_raters(self):
        return len(self.subjects)


@dataclass
class AgreementMultigraph:
    tasks: list  # TaskGraph, sorted by task_id
    subjects: list  # global sorted subject ids
    subject_tasks: dict  # subject id -> sorted list of task ids

    @property
    def m(self):
        return len(self.subjects)

    @property
    def n(self):
        return len(self.tasks)

    def task_subject_indices(self, task):
        """Positions of a task's raters in the global subject list."""
        pos = {s: i for i, s in enumerate(self.subjects)}
        return np.array([pos[s] for s in task.subjects], dtype=np.intp)


def bin_rating(value, decimals=BIN_DECIMALS):
    return round(float(value), decimals)


def load_responses(path, schema=None):
    """Read a delimited rating file into a validated ResponseTable.

    Parameters
    ----------
    path : str
        Comma-separated file with a header row.  Expected columns are
        subject_id, task_id, the four dimension columns, and optionally
        view_seconds / label_seconds.
    schema : dict, optional
        Maps the canonical column names above to the actual header names
        in the file.

    Raises
    ------
    ValueError
        On a missing required column, a duplicated (subject, task) pair,
        an unparseable number, or a rating outside its scale.  The message
        names the offending rows.
    """
    schema = schema or {}

    def col(name):
        return schema.get(name, name)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file (no header row)")
        header = set(reader.fieldnames)
        required = ["subject_id", "task_id"] + list(DIMENSIONS)
        missing = [c for c in required if col(c) not in header]
        if missing:
            raise ValueError(f"{path}: missing required column(s): {', '.join(missing)}")
        has_view = col("view_seconds") in header
        has_label = col("label_seconds") in header

        rows = []
        problems = []
        seen = {}
        for lineno, rec in enumerate(reader, start=2):  # header is line 1
            sid = (rec[col("subject_id")] or "").strip()
            tid = (rec[col("task_id")] or "").strip()
            if not sid or not tid:
                problems.append(f"row {lineno}: empty subject_id or task_id")
                continue
            bad_id = [c for c in "\t,\n" if c in sid + tid]
            if bad_id:
                problems.append(f"row {lineno}: subject/task id contains a reserved character")
                continue
            key = (sid, tid)
            if key in seen:
                problems.append(f"row {lineno}: duplicate (subject, task) pair {key}, first seen at row {seen[key]}")
                continue
            seen[key] = lineno

            scores = {}
            for dim in DIMENSIONS:
                raw = (rec.get(col(dim)) or "").strip()
                if raw == "":
                    continue
                try:
                    value = float(raw)
                except ValueError:
                    problems.append(f"row {lineno}: unparseable {dim} value {raw!r}")
                    continue
                lo, hi = DIMENSION_SCALES[dim]
                if not (lo <= value <= hi) or not math.isfinite(value):
                    problems.append(f"row {lineno}: {dim} {value} outside [{lo:g}, {hi:g}]")
                    continue
                scores[dim] = value

            def seconds(name, available):
                if not available:
                    return None
                raw = (rec.get(col(name)) or "").strip()
                if raw == "":
                    return None
                try:
                    value = float(raw)
                except ValueError:
                    problems.append(f"row {lineno}: unparseable {name} value {raw!r}")
                    return None
                if value < 0:
                    problems.append(f"row {lineno}: negative {name}")
                    return None
                return value

            rows.append(
                ResponseRow(
                    subject_id=sid,
                    task_id=tid,
                    scores=scores,
                    view_seconds=seconds("view_seconds", has_view),
                    label_seconds=seconds("label_seconds", has_label),
                )
            )

    if problems:
        shown = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise ValueError(f"{path}: {shown}{more}")
    return ResponseTable(rows=rows)


def percentile_table(values, scale, dimension=""):
    """Build the cumulative-fraction table of a rating pool.

    Parameters
    ----------
    values : iterable of ratings (the pool, with multiplicity)
    scale : iterable of the valid discrete rating values
    """
    pool = [float(v) for v in values]
    if not pool:
        raise ValueError("empty rating pool")
    support = sorted({float(s) for s in scale})
    allowed = set(support)
    for v in pool:
        if v not in allowed:
            raise ValueError(f"pool value {v!r} not in scale")
    n = len(pool)
    counts = {s: 0 for s in support}
    for v in pool:
        counts[v] += 1
    cdf = {}
    running = 0
    for s in support:
        running += counts[s]
        cdf[s] = running / n
    return PercentileTable(dimension=dimension, support=support, cdf=cdf)


def agree(a_i, a_j, table, delta=DEFAULT_DELTA):
    """Percentile-rule agreement indicator for two ratings.

    Returns 1 iff the mean of the percentile gap at the two ratings and
    the gap at their successor values is at most `delta`.  Symmetric in
    the two ratings.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    d0 = abs(table.cum(a_i) - table.cum(a_j))
    d1 = abs(table.cum_after(a_i) - table.cum_after(a_j))
    return 1 if 0.5 * d0 + 0.5 * d1 <= delta else 0


def build_multigraph(table, dimension, delta=DEFAULT_DELTA, min_raters=DEFAULT_MIN_RATERS):
    """Build the per-task agreement multigraph for one rating dimension.

    Rows without a rating on `dimension` are ignored.  Tasks rated by
    fewer than `min_raters` subjects are dropped; the percentile table is
    computed from the remaining pool.  Task lists and rater lists are
    sorted by id so the result does not depend on input order.
    """
    rows = table.rows_for(dimension)
    if not rows:
        raise ValueError(f"no rows carry a rating for dimension {dimension!r}")

    by_task = {}
    for r in rows:
        by_task.setdefault(r.task_id, []).append(r)
    retained = {tid: rs for tid, rs in by_task.items() if len(rs) >= min_raters}
    if not retained:
        raise ValueError(
            f"no task has at least {min_raters} raters on {dimension!r}; nothing to build"
        )

    pool = [bin_rating(r.scores[dimension]) for rs in retained.values() for r in rs]
    ptable = percentile_table(pool, sorted(set(pool)), dimension=dimension)

    tasks = []
    subject_tasks = {}
    for tid in sorted(retained):
        rs = sorted(retained[tid], key=lambda r: r.subject_id)
        subjects = [r.subject_id for r in rs]
        ratings = [bin_rating(r.scores[dimension]) for r in rs]
        k = len(subjects)
        edges = np.zeros((k, k), dtype=np.uint8)
        for a in range(k):
            for b in range(k):
                if a != b:
                    edges[a, b] = agree(ratings[a], ratings[b], ptable, delta)
        tasks.append(TaskGraph(task_id=tid, subjects=subjects, edges=edges))
        for s in subjects:
            subject_tasks.setdefault(s, []).append(tid)

    subjects = sorted(subject_tasks)
    subject_tasks = {s: sorted(ts) for s, ts in sorted(subject_tasks.items())}
    return AgreementMultigraph(tasks=tasks, subjects=subjects, subject_tasks=subject_tasks)


def variance_ratio(table, dimension):
    """Within-task variance share of one dimension's ratings.

    Returns the mean (over tasks with at least two ratings) of the
    within-task population variance, divided by the population variance of
    the pooled ratings.  Values well below 1 indicate that raters disagree
    less on the same stimulus than across stimuli.
    """
    rows = table.rows_for(dimension)
    if not rows:
        raise ValueError(f"no rows carry a rating for dimension {dimension!r}")
    by_task = {}
    for r in rows:
        by_task.setdefault(r.task_id, []).append(r.scores[dimension])

    within = [
        float(np.var(np.asarray(vals, dtype=float)))
        for tid, vals in sorted(by_task.items())
        if len(vals) >= 2
    ]
    if not within:
        raise ValueError("need at least one task with two or more ratings")
    pooled = float(np.var(np.asarray([r.scores[dimension] for r in rows], dtype=float)))
    if pooled == 0.0:
        raise ValueError("all ratings identical: cross-task variance is zero")
    return float(np.mean(within)) / pooled
