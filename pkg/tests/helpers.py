"""Shared builders and brute-force oracles used across the test suite.

Oracles here are written as plain loops, independent of the library's
vectorized paths, so they can serve as ground truth for closed-form and
exactness checks.
"""

import math

import numpy as np

from glba.ingest import AgreementMultigraph, ResponseRow, ResponseTable, TaskGraph
from glba.model import ModelParams, R_CLAMP


def make_task(task_id, subjects, pairs, default=0):
    """TaskGraph from a dict {(i_id, j_id): indicator}; symmetric entries
    must be given explicitly unless `default` covers them."""
    r = len(subjects)
    edges = np.full((r, r), default, dtype=np.uint8)
    np.fill_diagonal(edges, 0)
    pos = {s: i for i, s in enumerate(subjects)}
    for (a, b), v in pairs.items():
        edges[pos[a], pos[b]] = v
    return TaskGraph(task_id=task_id, subjects=list(subjects), edges=edges)


def make_graph(tasks):
    subject_tasks = {}
    for t in tasks:
        for s in t.subjects:
            subject_tasks.setdefault(s, []).append(t.task_id)
    subjects = sorted(subject_tasks)
    subject_tasks = {s: sorted(v) for s, v in sorted(subject_tasks.items())}
    return AgreementMultigraph(tasks=tasks, subjects=subjects, subject_tasks=subject_tasks)


def random_task(rng, task_id, subjects):
    r = len(subjects)
    edges = rng.integers(0, 2, size=(r, r)).astype(np.uint8)
    np.fill_diagonal(edges, 0)
    return TaskGraph(task_id=task_id, subjects=list(subjects), edges=edges)


def random_graph(rng, m=8, n=6, r_lo=2, r_hi=5, subject_prefix="s"):
    ids = [f"{subject_prefix}{i:03d}" for i in range(m)]
    r_hi = min(r_hi, m)
    tasks = []
    for k in range(n):
        r = int(rng.integers(r_lo, r_hi + 1))
        members = sorted(rng.choice(m, size=r, replace=False))
        tasks.append(random_task(rng, f"t{k:03d}", [ids[i] for i in members]))
    return make_graph(tasks)


def random_params(rng, graph, gamma=None):
    m = graph.m
    return ModelParams(
        subjects=graph.subjects,
        tau=rng.uniform(0.05, 0.95, size=m),
        alpha=rng.uniform(0.5, 5.0, size=m),
        beta=rng.uniform(0.5, 5.0, size=m),
        gamma=float(rng.uniform(0.05, 0.45)) if gamma is None else gamma,
    )


def table_from_rows(rows):
    """rows: (subject, task, scores_dict [, view, label])"""
    out = []
    for row in rows:
        s, t, scores = row[0], row[1], row[2]
        view = row[3] if len(row) > 3 else None
        label = row[4] if len(row) > 4 else None
        out.append(
            ResponseRow(subject_id=s, task_id=t, scores=dict(scores), view_seconds=view, label_seconds=label)
        )
    return ResponseTable(rows=out)


def oracle_estep(task, params, include_self=False):
    """Brute-force E-step for one task: plain loops, direct (non-log)
    product for the gate odds ratio."""
    subs = task.subjects
    r = len(subs)
    E = task.edges
    tau = [params.tau[params.position[s]] for s in subs]
    alpha = [params.alpha[params.position[s]] for s in subs]
    beta = [params.beta[params.position[s]] for s in subs]
    g = params.gamma

    a_t, b_t = [], []
    for i in range(r):
        omega = sum(tau[j] * E[i, j] for j in range(r) if j != i)
        disagree = sum(tau[j] * (1 - E[i, j]) for j in range(r) if j != i)
        if include_self:
            disagree += tau[i]
        a_t.append(alpha[i] + omega)
        b_t.append(beta[i] + disagree)

    t_t = []
    for j in range(r):
        R = 1.0
        for i in range(r):
            if i == j:
                continue
            if E[i, j]:
                R *= a_t[i] / ((a_t[i] + b_t[i]) * g)
            else:
                R *= b_t[i] / ((a_t[i] + b_t[i]) * (1.0 - g))
        R = min(max(R, R_CLAMP[0]), R_CLAMP[1])
        t_t.append(R * tau[j] / (R * tau[j] + 1.0 - tau[j]))
    return np.array(a_t), np.array(b_t), np.array(t_t)


def oracle_mstep_residual(a, b, d, stats_ab, tau0, s0, mode):
    """Residual of the shape stationarity system, from first principles."""
    from scipy.special import digamma

    s_a = sum(digamma(at) - digamma(at + bt) for at, bt in stats_ab)
    s_b = sum(digamma(bt) - digamma(at + bt) for at, bt in stats_ab)
    s = a + b
    if mode == "paper-literal":
        h = s / s0 - math.log(s)
    else:
        h = 1.0 / s0 - 1.0 / s
    f_a = s_a - d * (digamma(a) - digamma(s)) - h
    f_b = s_b - d * (digamma(b) - digamma(s)) - h
    return f_a, f_b
