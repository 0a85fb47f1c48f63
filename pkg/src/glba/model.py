"""Joint reliability/regularity model over agreement multigraphs.

Each subject i carries a reliability rate tau_i (probability of answering
seriously) and Beta-shape regularity parameters (alpha_i, beta_i) for how
often a serious answer agrees with other serious answers.  A global rate
gamma governs agreement by pure chance.  Per task, a latent gate decides
whether a subject answered seriously; agreement indicators are Bernoulli
draws from either the subject-specific agreement rate or from gamma.

Estimation is variational EM: the E-step computes per-task posterior
statistics in closed form (with a geometric-mean approximation for the
gate odds ratio), and the M-step re-estimates each subject's parameters
(projected damped Newton-Raphson for the Beta shapes, exact closed forms
for tau and gamma).  An outer empirical-Bayes loop re-centers the priors
on the population means.
"""

import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma, polygamma, xlogy

logger = logging.getLogger(__name__)

# Positivity floor for Beta shape parameters.
EPS_POS = 1e-6

# Gate odds ratios are clamped to this range after the log-space product.
R_CLAMP = (1e-12, 1e12)

GAMMA_CLAMP = (0.01, 0.49)

_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-8
_MAX_HALVINGS = 20

DEFAULT_GAMMA_GRID = tuple(float(g) for g in np.linspace(0.3, 0.48, 10))


def gamma_grid(lo, hi, count):
    """Evenly spaced chance-agreement rates over [lo, hi], inclusive."""
    if count < 1:
        raise ValueError("grid needs at least one point")
    if count == 1:
        return [float(lo)]
    return [float(g) for g in np.linspace(lo, hi, count)]


@dataclass
class ModelParams:
    """Per-subject (tau, alpha, beta) plus the global chance rate gamma."""

    subjects: list
    tau: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: float
    position: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.position = {s: i for i, s in enumerate(self.subjects)}

    def validate(self):
        m = len(self.subjects)
        if not (self.tau.shape == self.alpha.shape == self.beta.shape == (m,)):
            raise ValueError("parameter arrays must align with the subject list")
        if np.any((self.tau < 0) | (self.tau > 1)):
            raise ValueError("tau must lie in [0, 1]")
        if np.any(self.alpha < EPS_POS) or np.any(self.beta < EPS_POS):
            raise ValueError(f"alpha and beta must be >= {EPS_POS}")
        if not (0.0 < self.gamma < 0.5):
            raise ValueError("gamma must lie in (0, 0.5)")
        return self

    def tau_of(self, subject):
        return float(self.tau[self.position[subject]])

    def tau_map(self):
        return {s: float(self.tau[i]) for i, s in enumerate(self.subjects)}


@dataclass
class Priors:
    """Mean reliability tau0 and Gamma scale s0 for the shape-sum prior."""

    tau0: float = 0.5
    s0: float = 1.0

    def validate(self):
        if not (0.0 < self.tau0 < 1.0):
            raise ValueError("tau0 must lie in (0, 1)")
        if self.s0 <= 0.0:
            raise ValueError("s0 must be positive")
        return self


@dataclass
class TaskStats:
    """Posterior statistics of one task, aligned with its rater list."""

    task_id: str
    subjects: list
    alpha_tilde: np.ndarray
    beta_tilde: np.ndarray
    tau_tilde: np.ndarray


@dataclass
class FitConfig:
    gamma: object = 0.37  # float, or a sequence of floats for fit_grid
    update_gamma: bool = False
    tol: float = 1e-6
    max_iter: int = 500
    eb_tol: float = 1e-4
    eb_max_rounds: int = 20
    prior_grad_mode: str = "gamma-map"  # or "paper-literal"
    seed: int = 0
    psi_includes_self: bool = False
    workers: int | None = None  # None -> GLBA_THREADS env var, 0/unset -> auto

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.eb_max_rounds < 1:
            raise ValueError("eb_max_rounds must be at least 1")
        if self.prior_grad_mode not in ("gamma-map", "paper-literal"):
            raise ValueError(f"unknown prior_grad_mode {self.prior_grad_mode!r}")

    def gamma_value(self):
        g = self.gamma
        if not isinstance(g, (int, float)):
            raise ValueError("config.gamma is a grid; use fit_grid for grids")
        g = float(g)
        if not (0.0 < g < 0.5):
            raise ValueError("gamma must lie in (0, 0.5)")
        return g


@dataclass
class FitReport:
    params: ModelParams
    priors: Priors
    iterations: int
    converged: bool
    loglik_trace: list
    round_starts: list = field(default_factory=list)
    fallback_subjects: list = field(default_factory=list)
    gamma_kept_count: int = 0


def resolve_workers(workers=None):
    """Worker count for parallel phases; GLBA_THREADS caps it (0 = auto)."""
    if workers is None:
        raw = os.environ.get("GLBA_THREADS", "0")
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"GLBA_THREADS must be an integer, got {raw!r}")
    if workers < 0:
        raise ValueError("worker count must be nonnegative")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


# ---------------------------------------------------------------------------
# Auxiliary sums and the gate odds ratio
# ---------------------------------------------------------------------------


def task_sums(task, weights, focal, include_self=False):
    """Weighted agreement sums of one subject within one task.

    Returns (omega, psi, omega_bar, psi_bar): omega is the weight-sum of
    the focal subject's agreeing neighbors, psi the weight-sum of all
    neighbors, and the barred versions are the same sums with weights
    1 - w.  With include_self=True, psi additionally counts the focal
    subject's own weight (the literal printed form of the definition).
    """
    if focal not in task.subjects:
        raise ValueError(f"subject {focal!r} is not a rater of task {task.task_id!r}")
    try:
        w = [float(weights[s]) for s in task.subjects]
    except KeyError as exc:
        raise ValueError(f"weights missing for subject {exc.args[0]!r}") from None
    i = task.subjects.index(focal)
    E = task.edges
    omega = 0.0
    psi = 0.0
    omega_bar = 0.0
    psi_bar = 0.0
    for j in range(len(w)):
        if j == i:
            continue
        omega += w[j] * E[i, j]
        psi += w[j]
        omega_bar += (1.0 - w[j]) * E[i, j]
        psi_bar += 1.0 - w[j]
    if include_self:
        psi += w[i]
        psi_bar += 1.0 - w[i]
    return omega, psi, omega_bar, psi_bar


def r_approx(task, focal, alpha_k, beta_k, gamma):
    """Gate odds ratio of one subject in one task.

    Product over the focal subject's neighbors of
    (1/(a+b)) * (a/gamma)^I * (b/(1-gamma))^(1-I), where (a, b) are the
    neighbors' Beta statistics and I the neighbor->focal agreement
    indicator.  Evaluated in log space and clamped to R_CLAMP.
    """
    if focal not in task.subjects:
        raise ValueError(f"subject {focal!r} is not a rater of task {task.task_id!r}")
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")
    j = task.subjects.index(focal)
    E = task.edges
    log_r = 0.0
    for i, s in enumerate(task.subjects):
        if i == j:
            continue
        a = float(alpha_k[s])
        b = float(beta_k[s])
        if a <= 0 or b <= 0:
            raise ValueError(f"nonpositive Beta statistic for subject {s!r}")
        log_r -= math.log(a + b)
        if E[i, j]:
            log_r += math.log(a) - math.log(gamma)
        else:
            log_r += math.log(b) - math.log(1.0 - gamma)
    try:
        r = math.exp(log_r)
    except OverflowError:
        r = math.inf
    return min(max(r, R_CLAMP[0]), R_CLAMP[1])


def _complement_edges(E):
    """1 - E with the (unused) diagonal forced back to zero."""
    comp = 1.0 - E
    np.einsum("gii->gi", comp)[...] = 0.0
    return comp


def _estep_kernel(E, comp, t, a, b, gamma, include_self):
    """Closed-form posterior statistics for a batch of same-size tasks.

    E: (G, r, r) indicators with zero diagonal, comp its complement;
    t/a/b: (G, r) parameter values of the raters.  Returns
    (alpha_tilde, beta_tilde, tau_tilde).  Agreement and disagreement
    masses are accumulated separately so the tilde statistics never fall
    below the base parameters, not even by rounding.
    """
    omega = np.einsum("gij,gj->gi", E, t)
    disagree = np.einsum("gij,gj->gi", comp, t)
    a_t = a + omega
    b_t = b + disagree + (t if include_self else 0.0)

    log_a = np.log(a_t)
    log_b = np.log(b_t)
    log_s = np.log(a_t + b_t)
    log_g = math.log(gamma)
    log_1g = math.log1p(-gamma)
    # Factor of neighbor i toward focal j: base + I_{i,j} * swing.
    base = log_b - log_s - log_1g
    swing = log_a - log_b - log_g + log_1g
    log_r = base.sum(axis=1, keepdims=True) - base + np.einsum("gi,gij->gj", swing, E)
    with np.errstate(over="ignore", under="ignore"):
        r = np.exp(log_r)
    r = np.clip(r, R_CLAMP[0], R_CLAMP[1])

    tau_t = r * t / (r * t + (1.0 - t))
    return a_t, b_t, tau_t


def e_step_task(task, params):
    """Posterior statistics (alpha~, beta~, tau~) of one task's raters."""
    params.validate()
    sidx = np.array([params.position[s] for s in task.subjects], dtype=np.intp)
    E = task.edges.astype(float)[None, :, :]
    a_t, b_t, tau_t = _estep_kernel(
        E,
        _complement_edges(E),
        params.tau[sidx][None, :],
        params.alpha[sidx][None, :],
        params.beta[sidx][None, :],
        params.gamma,
        include_self=False,
    )
    return TaskStats(
        task_id=task.task_id,
        subjects=list(task.subjects),
        alpha_tilde=a_t[0],
        beta_tilde=b_t[0],
        tau_tilde=tau_t[0],
    )


# ---------------------------------------------------------------------------
# M-step: Beta shapes by projected damped Newton, tau in closed form
# ---------------------------------------------------------------------------


def _prior_term(s, s0, mode):
    """Left-hand side h(alpha+beta) of the shape stationarity system."""
    if mode == "paper-literal":
        return s / s0 - np.log(s)
    return 1.0 / s0 - 1.0 / s


def _prior_term_deriv(s, s0, mode):
    if mode == "paper-literal":
        return 1.0 / s0 - 1.0 / s
    return 1.0 / (s * s)


def _ab_residual(a, b, d, s_a, s_b, s0, mode):
    s = a + b
    dig_s = digamma(s)
    h = _prior_term(s, s0, mode)
    f_a = s_a - d * (digamma(a) - dig_s) - h
    f_b = s_b - d * (digamma(b) - dig_s) - h
    return f_a, f_b


def _bisect_coord(f, lo=EPS_POS, hi0=1.0, steps=200):
    """Root of a scalar function by bracket expansion + bisection."""
    flo = f(lo)
    if not np.isfinite(flo) or flo <= 0.0:
        return lo
    hi = max(hi0, 2 * lo)
    fhi = f(hi)
    while fhi > 0.0 and hi < 1e12:
        hi *= 4.0
        fhi = f(hi)
    if fhi > 0.0:
        return hi
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _bisect_ab(d, s_a, s_b, s0, mode, tol=_NEWTON_TOL, sweeps=200):
    """Alternating coordinate bisection; each coordinate map is monotone."""
    a, b = 1.0, 1.0
    for _ in range(sweeps):
        a = _bisect_coord(lambda x: _ab_residual(x, b, d, s_a, s_b, s0, mode)[0])
        b = _bisect_coord(lambda x: _ab_residual(a, x, d, s_a, s_b, s0, mode)[1])
        f_a, f_b = _ab_residual(a, b, d, s_a, s_b, s0, mode)
        if max(abs(f_a), abs(f_b)) <= tol:
            break
    return a, b


def _solve_shapes(a0, b0, d, s_a, s_b, s0, mode, tol=_NEWTON_TOL):
    """Solve the shape stationarity system for every subject at once.

    Subjects with no tasks get the prior-centered point (s0/2, s0/2).
    Newton iterates are damped (step halving on residual increase) and
    projected to stay >= EPS_POS; subjects where Newton stalls or fails
    within the iteration budget fall back to coordinate bisection.

    Returns (alpha, beta, fallback_mask).
    """
    m = len(d)
    a = np.clip(np.asarray(a0, dtype=float).copy(), EPS_POS, None)
    b = np.clip(np.asarray(b0, dtype=float).copy(), EPS_POS, None)
    fallback = np.zeros(m, dtype=bool)

    nodata = d == 0
    a[nodata] = s0 / 2.0
    b[nodata] = s0 / 2.0

    active = np.flatnonzero(~nodata)
    trigamma = lambda x: polygamma(1, x)

    for _ in range(_NEWTON_MAX_ITER):
        if active.size == 0:
            break
        aa, bb = a[active], b[active]
        f_a, f_b = _ab_residual(aa, bb, d[active], s_a[active], s_b[active], s0, mode)
        res = np.maximum(np.abs(f_a), np.abs(f_b))
        done = res <= tol
        if done.any():
            active = active[~done]
            if active.size == 0:
                break
            aa, bb = a[active], b[active]
            f_a, f_b, res = f_a[~done], f_b[~done], res[~done]

        dd = d[active]
        ss = aa + bb
        tri_s = trigamma(ss)
        hp = _prior_term_deriv(ss, s0, mode)
        j_aa = -dd * (trigamma(aa) - tri_s) - hp
        j_bb = -dd * (trigamma(bb) - tri_s) - hp
        j_ab = dd * tri_s - hp
        det = j_aa * j_bb - j_ab * j_ab
        bad = ~np.isfinite(det) | (np.abs(det) < 1e-300)
        if bad.any():
            fallback[active[bad]] = True
            keep = ~bad
            active = active[keep]
            if active.size == 0:
                break
            aa, bb, f_a, f_b, res = aa[keep], bb[keep], f_a[keep], f_b[keep], res[keep]
            j_aa, j_bb, j_ab, det = j_aa[keep], j_bb[keep], j_ab[keep], det[keep]
            dd = d[active]

        step_a = (-f_a * j_bb + f_b * j_ab) / det
        step_b = (-f_b * j_aa + f_a * j_ab) / det

        scale = np.ones_like(step_a)
        stalled = np.ones(active.size, dtype=bool)
        for _halving in range(_MAX_HALVINGS + 1):
            ta = np.clip(aa + scale * step_a, EPS_POS, None)
            tb = np.clip(bb + scale * step_b, EPS_POS, None)
            tf_a, tf_b = _ab_residual(ta, tb, dd, s_a[active], s_b[active], s0, mode)
            tres = np.maximum(np.abs(tf_a), np.abs(tf_b))
            worse = ~np.isfinite(tres) | (tres > res)
            accept = stalled & ~worse
            a[active[accept]] = ta[accept]
            b[active[accept]] = tb[accept]
            stalled &= worse
            if not stalled.any():
                break
            scale[stalled] *= 0.5
        if stalled.any():
            fallback[active[stalled]] = True
            active = active[~stalled]

    if active.size:
        # Newton budget exhausted without reaching the residual target.
        fallback[active] = True

    for i in np.flatnonzero(fallback):
        a[i], b[i] = _bisect_ab(d[i], s_a[i], s_b[i], s0, mode)
    return a, b, fallback


def m_step_subject(subject, stats, priors, config=None, warm_start=(1.0, 1.0)):
    """Re-estimate one subject's (alpha, beta, tau) from its task statistics.

    `stats` holds the TaskStats of every task the subject rated (may be
    empty: the priors then decide).  Returns (alpha, beta, tau,
    used_fallback).
    """
    config = config or FitConfig()
    priors.validate()
    s_a = 0.0
    s_b = 0.0
    tau_sum = 0.0
    d = 0
    for ts in stats:
        if subject not in ts.subjects:
            raise ValueError(f"subject {subject!r} is not in task {ts.task_id!r} stats")
        i = ts.subjects.index(subject)
        at = float(ts.alpha_tilde[i])
        bt = float(ts.beta_tilde[i])
        s_a += float(digamma(at) - digamma(at + bt))
        s_b += float(digamma(bt) - digamma(at + bt))
        tau_sum += float(ts.tau_tilde[i])
        d += 1
    tau = (priors.tau0 + tau_sum) / (d + 1.0)
    a, b, fb = _solve_shapes(
        np.array([warm_start[0]]),
        np.array([warm_start[1]]),
        np.array([d]),
        np.array([s_a]),
        np.array([s_b]),
        priors.s0,
        config.prior_grad_mode,
    )
    return float(a[0]), float(b[0]), float(tau), bool(fb[0])


# ---------------------------------------------------------------------------
# gamma update
# ---------------------------------------------------------------------------


def gamma_ratio(tasks, stats, include_self=False):
    """Brute-force numerator/denominator of the chance-rate update.

    Sums, over every task and rater, the (1 - tau~)-weighted count of
    agreeing neighbor pairs (numerator) and of all neighbor pairs
    (denominator).  Plain sequential accumulation, so the result is
    reproducible and independent of any vectorization.
    """
    num = 0.0
    den = 0.0
    for task, ts in zip(tasks, stats):
        E = task.edges
        tt = ts.tau_tilde
        k = len(ts.subjects)
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                w = 1.0 - float(tt[j])
                num += w * float(E[i, j])
                den += w
            if include_self:
                den += 1.0 - float(tt[i])
    return num, den


def update_gamma(tasks, stats, previous, include_self=False):
    """Closed-form chance-agreement rate, clamped to GAMMA_CLAMP.

    A zero denominator (all gates confidently open) keeps `previous`.
    """
    num, den = gamma_ratio(tasks, stats, include_self=include_self)
    if den <= 0.0:
        logger.warning("gamma update skipped: zero denominator (all tau~ at 1)")
        return float(previous)
    return float(np.clip(num / den, GAMMA_CLAMP[0], GAMMA_CLAMP[1]))


# ---------------------------------------------------------------------------
# Symmetrized pairwise agreement probability (documented utility)
# ---------------------------------------------------------------------------


def symmetrized_prob(p, q):
    """Probability that a mutually-consistent agreement indicator fires.

    H(p, q) = pq / (pq + (1-p)(1-q)); symmetric, with H(0.5, q) = q.
    Only defined on the open unit interval.
    """
    for x in (p, q):
        if not (0.0 < x < 1.0):
            raise ValueError(f"arguments must lie strictly inside (0, 1), got {x}")
    return p * q / (p * q + (1.0 - p) * (1.0 - q))


# ---------------------------------------------------------------------------
# Monitored objective
# ---------------------------------------------------------------------------


def _objective_flat(prep, flat, params, priors, include_self):
    """Variational objective: expected complete-data log posterior plus
    the entropy of the factorized posterior.

    The prior enters in pseudo-count form (exponents tau0 and 1 - tau0 on
    tau, and the shape-sum Gamma kernel), which is exactly the form whose
    stationary points the M-step updates solve; the trace is therefore a
    proper ascent monitor for the default configuration.
    """
    a_t, b_t, t_t = flat
    tau_i = params.tau[prep.flat_sidx]
    alpha_i = params.alpha[prep.flat_sidx]
    beta_i = params.beta[prep.flat_sidx]

    dig_a = digamma(a_t)
    dig_b = digamma(b_t)
    dig_s = digamma(a_t + b_t)
    lam_a = dig_a - dig_s
    lam_b = dig_b - dig_s

    # Weighted neighbor sums evaluated at the gate posteriors.
    omega_tt = np.empty_like(t_t)
    psi_tt = np.empty_like(t_t)
    omega_bar = np.empty_like(t_t)
    psi_bar = np.empty_like(t_t)
    for E, _comp, _sidx, dest in prep.groups:
        tt = t_t[dest]
        om = np.einsum("gij,gj->gi", E, tt)
        om_b = np.einsum("gij,gj->gi", E, 1.0 - tt)
        if include_self:
            ps = np.broadcast_to(tt.sum(axis=1, keepdims=True), tt.shape)
        else:
            ps = tt.sum(axis=1, keepdims=True) - tt
        r = tt.shape[1]
        ps_b = (r if include_self else r - 1) - ps
        omega_tt[dest] = om
        psi_tt[dest] = ps
        omega_bar[dest] = om_b
        psi_bar[dest] = ps_b

    gates = np.sum(xlogy(t_t, tau_i) + xlogy(1.0 - t_t, 1.0 - tau_i))
    shapes = np.sum(
        (alpha_i - 1.0 + omega_tt) * lam_a
        + (beta_i - 1.0 + psi_tt - omega_tt) * lam_b
        - betaln(alpha_i, beta_i)
    )
    chance = math.log(params.gamma) * float(np.sum(omega_bar)) + math.log1p(
        -params.gamma
    ) * float(np.sum(psi_bar - omega_bar))

    prior = float(
        np.sum(xlogy(priors.tau0, params.tau) + xlogy(1.0 - priors.tau0, 1.0 - params.tau))
    )
    shape_sum = params.alpha + params.beta
    prior += float(np.sum(np.log(shape_sum) - shape_sum / priors.s0))

    ent_gate = -np.sum(xlogy(t_t, t_t) + xlogy(1.0 - t_t, 1.0 - t_t))
    ent_beta = np.sum(
        betaln(a_t, b_t)
        - (a_t - 1.0) * dig_a
        - (b_t - 1.0) * dig_b
        + (a_t + b_t - 2.0) * dig_s
    )
    return float(gates + shapes + chance + prior + ent_gate + ent_beta)


def log_posterior(params, priors, multigraph, stats):
    """Monitored variational objective for a full stats set.

    `stats` must align one-to-one with multigraph.tasks.  Normally read
    off FitReport.loglik_trace; exposed for direct evaluation.
    """
    prep = _Prepared(multigraph)
    flat = prep.flat_from_stats(stats)
    return _objective_flat(prep, flat, params, priors, include_self=False)


# ---------------------------------------------------------------------------
# Fit driver
# ---------------------------------------------------------------------------


class _Prepared:
    """Multigraph flattened into same-rater-count groups for array passes.

    Flat arrays are laid out task-major (in multigraph task order), so
    scatter-accumulations over them reproduce plain per-task summation
    bit for bit.
    """

    def __init__(self, graph):
        self.graph = graph
        pos = {s: i for i, s in enumerate(graph.subjects)}
        n = len(graph.tasks)
        self.offsets = np.zeros(n + 1, dtype=np.intp)
        for t_i, task in enumerate(graph.tasks):
            self.offsets[t_i + 1] = self.offsets[t_i] + len(task.subjects)
        self.total = int(self.offsets[-1])
        self.flat_sidx = np.empty(self.total, dtype=np.intp)
        by_size = {}
        for t_i, task in enumerate(graph.tasks):
            r = len(task.subjects)
            sidx = np.array([pos[s] for s in task.subjects], dtype=np.intp)
            self.flat_sidx[self.offsets[t_i] : self.offsets[t_i + 1]] = sidx
            by_size.setdefault(r, []).append(t_i)
        self.groups = []
        for r in sorted(by_size):
            idx = by_size[r]
            E = np.stack([graph.tasks[t_i].edges for t_i in idx]).astype(float)
            sidx = np.stack(
                [self.flat_sidx[self.offsets[t_i] : self.offsets[t_i + 1]] for t_i in idx]
            )
            dest = np.stack(
                [np.arange(self.offsets[t_i], self.offsets[t_i + 1], dtype=np.intp) for t_i in idx]
            )
            self.groups.append((E, _complement_edges(E), sidx, dest))
        self.degree = np.zeros(graph.m, dtype=float)
        np.add.at(self.degree, self.flat_sidx, 1.0)

    def flat_from_stats(self, stats):
        if len(stats) != len(self.graph.tasks):
            raise ValueError("stats must cover every task of the multigraph")
        a_t = np.empty(self.total)
        b_t = np.empty(self.total)
        t_t = np.empty(self.total)
        for t_i, (task, ts) in enumerate(zip(self.graph.tasks, stats)):
            if ts.task_id != task.task_id:
                raise ValueError(
                    f"stats order mismatch: expected {task.task_id!r}, got {ts.task_id!r}"
                )
            sl = slice(self.offsets[t_i], self.offsets[t_i + 1])
            a_t[sl] = ts.alpha_tilde
            b_t[sl] = ts.beta_tilde
            t_t[sl] = ts.tau_tilde
        return a_t, b_t, t_t

    def stats_list(self, flat):
        a_t, b_t, t_t = flat
        out = []
        for t_i, task in enumerate(self.graph.tasks):
            sl = slice(self.offsets[t_i], self.offsets[t_i + 1])
            out.append(
                TaskStats(
                    task_id=task.task_id,
                    subjects=list(task.subjects),
                    alpha_tilde=a_t[sl].copy(),
                    beta_tilde=b_t[sl].copy(),
                    tau_tilde=t_t[sl].copy(),
                )
            )
        return out


def _estep_all(prep, tau, alpha, beta, gamma, include_self, workers=1):
    a_t = np.empty(prep.total)
    b_t = np.empty(prep.total)
    t_t = np.empty(prep.total)

    def run_chunk(E, comp, sidx, dest):
        ga, gb, gt = _estep_kernel(
            E, comp, tau[sidx], alpha[sidx], beta[sidx], gamma, include_self
        )
        a_t[dest] = ga
        b_t[dest] = gb
        t_t[dest] = gt

    chunks = []
    for E, comp, sidx, dest in prep.groups:
        g = E.shape[0]
        if workers > 1 and g >= 2 * workers:
            bounds = np.linspace(0, g, workers + 1, dtype=int)
            for lo, hi in zip(bounds[:-1], bounds[1:]):
                if hi > lo:
                    chunks.append((E[lo:hi], comp[lo:hi], sidx[lo:hi], dest[lo:hi]))
        else:
            chunks.append((E, comp, sidx, dest))

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda c: run_chunk(*c), chunks))
    else:
        for c in chunks:
            run_chunk(*c)
    return a_t, b_t, t_t


def fit(multigraph, config=None):
    """Variational EM fit of the reliability model on one multigraph.

    Starts from tau0 = 0.5, tau_i = alpha_i = beta_i = 1; alternates the
    per-task E-step (statistics computed from the previous iteration's
    parameters throughout, so evaluation order never matters) with the
    per-subject M-step until the largest parameter change drops below
    config.tol.  An outer loop re-centers the priors on the fitted
    population means and refits until they stop moving.  Deterministic:
    identical inputs give a bit-identical report.
    """
    config = config or FitConfig()
    if multigraph.n == 0:
        raise ValueError("multigraph has no tasks")
    gamma = config.gamma_value()
    workers = resolve_workers(config.workers)
    include_self = config.psi_includes_self

    prep = _Prepared(multigraph)
    m = multigraph.m
    tau0, s0 = 0.5, 1.0
    tau = np.ones(m)
    alpha = np.ones(m)
    beta = np.ones(m)

    trace = []
    round_starts = []
    fallback_ids = set()
    gamma_kept = 0
    total_iters = 0
    converged = False

    for _round in range(config.eb_max_rounds):
        round_starts.append(total_iters)
        priors = Priors(tau0=tau0, s0=s0)
        # Each round refits from the standard initialization: the E-step
        # re-derives gate posteriors from the reliability parameters, so a
        # warm start is not an ascent point of the new round's objective
        # and would break the monotone trace.
        tau = np.ones(m)
        alpha = np.ones(m)
        beta = np.ones(m)
        converged = False
        for _it in range(config.max_iter):
            flat = _estep_all(prep, tau, alpha, beta, gamma, include_self, workers)
            a_t, b_t, t_t = flat

            contrib_a = digamma(a_t) - digamma(a_t + b_t)
            contrib_b = digamma(b_t) - digamma(a_t + b_t)
            s_a = np.zeros(m)
            s_b = np.zeros(m)
            tau_acc = np.zeros(m)
            np.add.at(s_a, prep.flat_sidx, contrib_a)
            np.add.at(s_b, prep.flat_sidx, contrib_b)
            np.add.at(tau_acc, prep.flat_sidx, t_t)

            new_tau = (tau0 + tau_acc) / (prep.degree + 1.0)
            new_alpha, new_beta, fb = _solve_shapes(
                alpha, beta, prep.degree, s_a, s_b, s0, config.prior_grad_mode
            )
            if fb.any():
                fallback_ids.update(multigraph.subjects[i] for i in np.flatnonzero(fb))

            if config.update_gamma:
                stats = prep.stats_list(flat)
                new_gamma = update_gamma(
                    multigraph.tasks, stats, gamma, include_self=include_self
                )
                if new_gamma == gamma:
                    num, den = gamma_ratio(multigraph.tasks, stats, include_self)
                    if den <= 0.0:
                        gamma_kept += 1
                gamma = new_gamma

            delta = max(
                float(np.max(np.abs(new_tau - tau))),
                float(np.max(np.abs(new_alpha - alpha))),
                float(np.max(np.abs(new_beta - beta))),
            )
            tau, alpha, beta = new_tau, new_alpha, new_beta
            total_iters += 1
            if not (
                np.all(np.isfinite(tau))
                and np.all(np.isfinite(alpha))
                and np.all(np.isfinite(beta))
            ):
                raise RuntimeError(f"non-finite parameters at EM iteration {total_iters}")

            params = ModelParams(
                subjects=multigraph.subjects, tau=tau, alpha=alpha, beta=beta, gamma=gamma
            )
            trace.append(_objective_flat(prep, flat, params, priors, include_self))

            if delta < config.tol:
                converged = True
                break

        new_tau0 = float(np.mean(tau))
        new_s0 = float(np.mean(alpha + beta) / 2.0)
        if max(abs(new_tau0 - tau0), abs(new_s0 - s0)) < config.eb_tol:
            break
        tau0, s0 = new_tau0, new_s0

    params = ModelParams(
        subjects=multigraph.subjects, tau=tau, alpha=alpha, beta=beta, gamma=gamma
    )
    return FitReport(
        params=params,
        priors=Priors(tau0=tau0, s0=s0),
        iterations=total_iters,
        converged=converged,
        loglik_trace=trace,
        round_starts=round_starts,
        fallback_subjects=sorted(fallback_ids),
        gamma_kept_count=gamma_kept,
    )


def fit_grid(multigraph, config=None):
    """Independent fits over a grid of chance rates; one report per value."""
    config = config or FitConfig(gamma=DEFAULT_GAMMA_GRID)
    grid = config.gamma
    if isinstance(grid, (int, float)):
        grid = [float(grid)]
    reports = []
    for g in grid:
        reports.append(fit(multigraph, dataclasses.replace(config, gamma=float(g))))
    return reports
