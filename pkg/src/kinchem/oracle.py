"""Abstract pair-interaction model with exact small-system verification tools.

N particles carry states from a small finite set; every unordered pair fires
an independent Poisson clock of rate 2 lambda / (N - 1) and, when it rings,
the pair state is redrawn from a swap-symmetric stochastic kernel.  The
one-particle marginal admits an expansion over "interaction histories": the
ordered sequence theta_v of pairs that can influence particle v, built by a
backward closure over shared particles.  This module implements

* the combinatorics of those sequences (connectivity, essential pairs,
  exact counts by redundancy type),
* the truncated resummation series for the marginal, with exact
  simplex-exponential time integrals, at finite N and in the N -> infinity
  limit where only essential sequences survive,
* brute-force oracles: dense master-equation propagation for small N,
  direct process simulation, and k-particle factorization statistics.

Particle labels are arbitrary hashables; sequence positions are 0-based.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "PairModel",
    "InteractionSequence",
    "Classification",
    "classify",
    "extract_theta_v",
    "extract_theta_indices",
    "pairs_from_event_log",
    "scaled_essential_count",
    "count_sequences_by_type",
    "canonical_anchored_sequences",
    "truncation_tail",
    "SeriesResult",
    "series_marginal",
    "series_marginal_semigroup",
    "master_generator",
    "exact_joint",
    "exact_marginal",
    "exact_pair_correlation",
    "simulate_pair_system",
    "ChaosReport",
    "chaos_statistic",
    "voter_model",
    "contagion_model",
    "tv_distance",
]


# -- the model -------------------------------------------------------------------


@dataclass
class PairModel:
    """Finite pair-interaction model: |S| states, stochastic pair kernel, rate.

    ``kernel[(s, s'), (s1, s1')]`` (flattened as s * |S| + s') is the
    probability that a firing pair in states (s, s') moves to (s1, s1').
    Rows must sum to one and the kernel must commute with swapping the two
    particles.
    """

    n_states: int
    kernel: np.ndarray
    rate: float

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=float)
        S = self.n_states
        if self.kernel.shape != (S * S, S * S):
            raise ValueError(f"kernel must be ({S * S}, {S * S})")
        if self.rate <= 0.0:
            raise ValueError("rate must be positive")
        rows = self.kernel.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-12:
            raise ValueError("kernel rows must sum to 1")
        k4 = self.kernel.reshape(S, S, S, S)
        if np.max(np.abs(k4 - k4.transpose(1, 0, 3, 2))) > 1e-12:
            raise ValueError("kernel must be symmetric under swapping the pair")

    def kernel4(self) -> np.ndarray:
        S = self.n_states
        return self.kernel.reshape(S, S, S, S)


def voter_model(rate: float = 1.0, n_states: int = 2) -> PairModel:
    """Both particles adopt the state of one of them, chosen fairly."""
    S = n_states
    k = np.zeros((S * S, S * S))
    for a in range(S):
        for b in range(S):
            k[a * S + b, a * S + a] += 0.5
            k[a * S + b, b * S + b] += 0.5
    return PairModel(S, k, rate)


def contagion_model(alpha: float = 0.5, rate: float = 1.0) -> PairModel:
    """Two states; a mixed pair turns into (1, 1) with probability alpha."""
    k = np.eye(4)
    k[1] = [0.0, 1.0 - alpha, 0.0, alpha]   # (0,1)
    k[2] = [0.0, 0.0, 1.0 - alpha, alpha]   # (1,0)
    return PairModel(2, k, rate)


def tv_distance(mu, nu) -> float:
    return 0.5 * float(np.abs(np.asarray(mu) - np.asarray(nu)).sum())


# -- sequence combinatorics --------------------------------------------------------


def _as_pairs(theta) -> tuple:
    pairs = []
    seq = theta.pairs if isinstance(theta, InteractionSequence) else theta
    for p in seq:
        v, w = p
        if v == w:
            raise ValueError(f"malformed pair {p!r}: endpoints must differ")
        pairs.append(frozenset((v, w)))
    return tuple(pairs)


@dataclass(frozen=True)
class InteractionSequence:
    """Ordered list of unordered particle pairs."""

    pairs: tuple

    def __post_init__(self):
        object.__setattr__(self, "pairs",
                           tuple(tuple(p) for p in self.pairs))
        _as_pairs(self.pairs)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class Classification:
    connected: bool
    essential: bool
    nonessential: tuple     # 0-based positions of redundant pairs
    anchored: bool          # anchor belongs to the last pair


def classify(theta, anchor=None) -> Classification:
    """Connectivity and essentiality of a pair sequence.

    With V_k the union of all pairs after position k, the sequence is
    connected when every pair meets V_k, and the pair at k is essential
    unless both its endpoints reappear later (pair contained in V_k).
    """
    pairs = _as_pairs(theta)
    n = len(pairs)
    later: set = set()
    connected = True
    noness = []
    for k in range(n - 1, -1, -1):
        p = pairs[k]
        if k < n - 1 and not (p & later):
            connected = False
        if p <= later:
            noness.append(k)
        later |= p
    noness.reverse()
    anchored = bool(n) and anchor is not None and anchor in pairs[-1]
    return Classification(
        connected=connected,
        essential=connected and not noness,
        nonessential=tuple(noness),
        anchored=anchored,
    )


def extract_theta_indices(pairs, v) -> tuple:
    """Positions (0-based, chronological) of the influence history of v."""
    seq = _as_pairs(pairs)
    last = None
    for i in range(len(seq) - 1, -1, -1):
        if v in seq[i]:
            last = i
            break
    if last is None:
        return ()
    active: set = set()
    keep = []
    for i in range(last, -1, -1):
        if v in seq[i] or (seq[i] & active):
            keep.append(i)
            active |= seq[i]
    keep.reverse()
    return tuple(keep)


def extract_theta_v(pairs, v) -> tuple:
    """Influence history of particle v: the minimal subsequence containing every
    pair with v (up to the last such pair) that is closed backward under
    sharing a particle with an already retained pair."""
    raw = [tuple(p) for p in (pairs.pairs if isinstance(pairs, InteractionSequence) else pairs)]
    return tuple(raw[i] for i in extract_theta_indices(pairs, v))


def pairs_from_event_log(events) -> tuple:
    """Participant pairs of the binary events in a particle-engine event log."""
    return tuple(ev.participants for ev in events
                 if ev.channel in ("slow_binary", "fast_binary"))


def _falling(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
        if out == 0:
            return 0
    return out


def scaled_essential_count(n: int, n_particles: int, exact: bool = False):
    """(N-1)^{-n} times the number of essential anchored sequences of length n:
    the product of k (N - k) / (N - 1) over k = 1..n.  Bounded by n! and
    converging to n! as N grows."""
    N = n_particles
    if n < 0:
        raise ValueError("n must be >= 0")
    if n >= N:
        raise ValueError(f"degenerate count: length {n} needs more than "
                         f"{N} particles")
    if exact:
        from fractions import Fraction
        out = Fraction(1)
        for k in range(1, n + 1):
            out *= Fraction(k * (N - k), N - 1)
        return out
    out = 1.0
    for k in range(1, n + 1):
        out *= k * (N - k) / (N - 1)
    return out


def _canonical_key(pairs):
    """Lexicographically minimal relabeling of the non-anchor labels.

    Two anchored sequences describe the same class exactly when a permutation
    of the non-anchor particles maps one to the other; the anchor (label 0)
    stays fixed because the series projects onto its marginal.
    """
    labels = sorted({x for p in pairs for x in p if x != 0})
    best = None
    for perm in itertools.permutations(range(1, len(labels) + 1)):
        mapping = dict(zip(labels, perm))
        mapping[0] = 0
        cand = tuple(tuple(sorted((mapping[a], mapping[b]))) for a, b in pairs)
        if best is None or cand < best:
            best = cand
    return best, len(labels)


def canonical_anchored_sequences(n: int):
    """Canonical representatives of connected anchored sequences of length n.

    Generated backward from the last pair (which must contain the anchor,
    label 0): every earlier pair has to share a particle with the union of
    the later ones, so connectivity prunes the search exactly.  Each class
    is reduced to a canonical relabeling of its r non-anchor labels; a
    concrete sequence over N particles arises from exactly one canonical
    representative in (N-1)(N-2)...(N-r) ways.  Yields (pairs, r).
    """
    if n == 0:
        yield (), 0
        return
    classes: dict = {}

    def build(suffix_rev, seen, r):
        if len(suffix_rev) == n:
            pairs = tuple(reversed(suffix_rev))
            key, rr = _canonical_key(pairs)
            classes.setdefault(key, rr)
            return
        old = sorted(seen)
        for a, b in itertools.combinations(old, 2):
            build(suffix_rev + [(a, b)], seen, r)
        for a in old:
            build(suffix_rev + [(a, r + 1)], seen | {r + 1}, r + 1)

    build([(0, 1)], {0, 1}, 1)
    for pairs, r in classes.items():
        yield pairs, r


def count_sequences_by_type(n: int, n_particles: int) -> dict:
    """Exact counts of connected anchored sequences of length n over N
    particles, keyed by the frozen set of nonessential positions (the
    redundancy type; the empty set keys the essential count)."""
    N = n_particles
    out: dict = {}
    for pairs, r in canonical_anchored_sequences(n):
        mult = _falling(N - 1, r)
        if mult == 0:
            continue
        cls = classify(pairs, anchor=0)
        key = frozenset(cls.nonessential)
        if not key:
            # essential sequences never repeat a pair
            assert len(set(map(frozenset, pairs))) == len(pairs)
        out[key] = out.get(key, 0) + mult
    return out


# -- resummation series -------------------------------------------------------------


def truncation_tail(lam: float, t: float, n_max: int) -> float:
    """sum_{n > n_max} (2 lambda t)^n / n!, the advertised truncation error."""
    x = 2.0 * lam * t
    term = x ** (n_max + 1) / math.factorial(n_max + 1)
    total = 0.0
    n = n_max + 1
    while term > 1e-300 and n < n_max + 400:
        total += term
        n += 1
        term *= x / n
    return total


def _simplex_exponential(hazards, t: float) -> float:
    """Integral over 0 < t_1 < ... < t_n < t of prod_k exp(-h_k (t_k - t_{k-1}))
    with h_{n+1} acting on the last interval; evaluated as a matrix exponential
    of the upper-bidiagonal stage matrix, robust to equal hazards."""
    m = len(hazards)
    B = np.diag(-np.asarray(hazards, dtype=float))
    for i in range(m - 1):
        B[i, i + 1] = 1.0
    return float(expm(B * t)[0, -1])


def _pairs_meeting(a: int, N: int) -> int:
    """Number of unordered pairs from N particles intersecting a fixed a-set."""
    return (N * (N - 1) - (N - a) * (N - a - 1)) // 2


def _apply_sequence(model: PairModel, pairs, n_labels: int, mu0: np.ndarray) -> np.ndarray:
    """Chronological product of pair operators applied to the i.i.d. initial
    product measure over ``n_labels`` particles; returns the anchor marginal."""
    S = model.n_states
    joint = mu0
    for _ in range(n_labels - 1):
        joint = np.multiply.outer(joint, mu0)
    joint = np.asarray(joint, dtype=float).reshape((S,) * n_labels)
    for (a, b) in pairs:
        moved = np.moveaxis(joint, (a, b), (n_labels - 2, n_labels - 1))
        shape = moved.shape
        flat = moved.reshape(-1, S * S) @ model.kernel
        joint = np.moveaxis(flat.reshape(shape), (n_labels - 2, n_labels - 1), (a, b))
    axes = tuple(range(1, n_labels))
    return joint.sum(axis=axes) if axes else joint


@dataclass
class SeriesResult:
    marginal: np.ndarray        # truncated series (mass <= 1)
    tail_bound: float
    n_max: int
    n_particles: Optional[int]  # None = infinite-N limit
    mass_by_length: np.ndarray  # probability captured at each history length

    @property
    def total_mass(self) -> float:
        return float(self.marginal.sum())


def series_marginal(model: PairModel, mu0, t: float, n_max: int,
                    n_particles: Optional[int] = None,
                    tol: Optional[float] = None) -> SeriesResult:
    """Truncated resummation of the anchor particle's marginal at time t.

    Each connected anchored history theta of length n <= n_max contributes
    P(theta) U(theta) mu0^{(x)}, with P(theta) the exact probability that the
    extracted influence history equals theta: a simplex-exponential integral
    whose interval hazards count the pairs able to disturb the growing
    cluster.  At finite N histories are summed over relabeling classes; in
    the N -> infinity limit only essential histories survive, each with unit
    class weight.  The returned marginal is the raw partial sum; its missing
    mass is the truncation error, bounded by ``truncation_tail``.
    """
    mu0 = np.asarray(mu0, dtype=float)
    if mu0.shape != (model.n_states,):
        raise ValueError("mu0 must be a distribution over the model states")
    if abs(mu0.sum() - 1.0) > 1e-9:
        raise ValueError("mu0 must sum to 1")
    lam = model.rate
    N = n_particles
    if N is not None and N < 2:
        raise ValueError("need at least two particles")
    tail = truncation_tail(lam, t, n_max)
    if tol is not None and tail > tol:
        raise ValueError(f"truncation tail {tail:.3g} above tolerance {tol:.3g}")

    total = np.zeros(model.n_states)
    mass = np.zeros(n_max + 1)
    cache: dict = {}
    for n in range(n_max + 1):
        for pairs, r in canonical_anchored_sequences(n):
            if N is None:
                if r != n:      # only essential histories survive the limit
                    continue
                coef = (2.0 * lam) ** n
            else:
                mult = _falling(N - 1, r)
                if mult == 0:
                    continue
                coef = (2.0 * lam / (N - 1)) ** n * mult
            # interval hazards: pairs meeting the active cluster are excluded
            hazards = []
            active = {0}
            sizes = [1]
            for p in reversed(pairs):
                active |= set(p)
                sizes.append(len(active))
            sizes.reverse()     # sizes[i] = |{anchor} U pairs[i:]|, sizes[n] = 1
            for a in sizes:
                if N is None:
                    hazards.append(2.0 * lam * a)
                else:
                    hazards.append(_pairs_meeting(a, N) * 2.0 * lam / (N - 1))
            key = (tuple(hazards), n)
            if key in cache:
                p_theta = cache[key]
            else:
                p_theta = _simplex_exponential(hazards, t)
                cache[key] = p_theta
            weight = coef * p_theta
            total += weight * _apply_sequence(model, pairs, r + 1, mu0)
            mass[n] += weight
    return SeriesResult(total, tail, n_max, N, mass)


def series_marginal_semigroup(model: PairModel, mu0, t: float, n_max: int,
                              n_steps: int, renormalize: bool = True):
    """Limit-dynamics marginal over horizons where a single truncation fails.

    The limiting one-particle dynamics is a time-homogeneous (nonlinear)
    semigroup with product data at every instant, so the flow over [0, t]
    composes exactly from flows over subintervals: each step evaluates the
    truncated essential series from the previous step's marginal.  Returns
    (marginal, accumulated tail bound).  Per-step renormalization restores
    the mass removed by truncation.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    mu = np.asarray(mu0, dtype=float)
    dt = t / n_steps
    tail_total = 0.0
    for _ in range(n_steps):
        res = series_marginal(model, mu, dt, n_max, n_particles=None)
        mu = res.marginal
        tail_total += res.tail_bound
        if renormalize:
            mu = mu / mu.sum()
    return mu, tail_total


# -- exact small-N oracles ------------------------------------------------------------


def master_generator(model: PairModel, N: int) -> np.ndarray:
    """Dense generator of the N-particle process on the |S|^N product space."""
    S = model.n_states
    dim = S ** N
    rate = 2.0 * model.rate / (N - 1)
    L = np.zeros((dim, dim))
    k4 = model.kernel4()
    powers = [S ** (N - 1 - i) for i in range(N)]
    for idx in range(dim):
        digits = [(idx // powers[i]) % S for i in range(N)]
        for v in range(N):
            for w in range(v + 1, N):
                a, b = digits[v], digits[w]
                for c in range(S):
                    for d in range(S):
                        p = k4[a, b, c, d]
                        if p == 0.0:
                            continue
                        jdx = idx + (c - a) * powers[v] + (d - b) * powers[w]
                        L[idx, jdx] += rate * p
                L[idx, idx] -= rate
    return L


def exact_joint(model: PairModel, mu0, t: float, N: int) -> np.ndarray:
    """Exact joint law at time t from the dense master equation, as an
    (|S|,)*N tensor."""
    S = model.n_states
    mu0 = np.asarray(mu0, dtype=float)
    joint = mu0
    for _ in range(N - 1):
        joint = np.multiply.outer(joint, mu0)
    vec = joint.reshape(-1)
    L = master_generator(model, N)
    out = vec @ expm(L * t)
    return out.reshape((S,) * N)


def exact_marginal(model: PairModel, mu0, t: float, N: int) -> np.ndarray:
    joint = exact_joint(model, mu0, t, N)
    return joint.sum(axis=tuple(range(1, joint.ndim)))


def exact_pair_correlation(model: PairModel, mu0, t: float, N: int) -> float:
    """max_{a,b} |mu_12(a,b) - mu_1(a) mu_2(b)| from the exact joint law."""
    joint = exact_joint(model, mu0, t, N)
    pair = joint.sum(axis=tuple(range(2, joint.ndim))) if N > 2 else joint
    m1 = pair.sum(axis=1)
    m2 = pair.sum(axis=0)
    return float(np.max(np.abs(pair - np.outer(m1, m2))))


# -- simulation and the factorization statistic ----------------------------------------


def simulate_pair_system(model: PairModel, N: int, t: float, mu0,
                         seed: int) -> np.ndarray:
    """One trajectory of the N-particle process; returns the final state vector."""
    S = model.n_states
    rng = random.Random(seed)
    mu0 = np.asarray(mu0, dtype=float)
    cum0 = np.cumsum(mu0)
    states = [int(np.searchsorted(cum0, rng.random())) for _ in range(N)]
    n_events = np.random.default_rng(seed ^ 0x9E3779B97F4A7C15).poisson(
        N * model.rate * t)
    rows = [list(np.cumsum(model.kernel[i])) for i in range(S * S)]
    randrange = rng.randrange
    uniform = rng.random
    for _ in range(int(n_events)):
        i = randrange(N)
        k = randrange(N - 1)
        j = k if k < i else k + 1
        row = rows[states[i] * S + states[j]]
        u = uniform()
        out = 0
        while row[out] < u:
            out += 1
        states[i], states[j] = divmod(out, S)
    return np.asarray(states, dtype=np.int64)


@dataclass
class ChaosReport:
    n_values: tuple
    correlations: dict          # N -> max factorization defect
    stderrs: dict               # N -> jackknife standard error
    slope: float
    slope_stderr: float


def _factorization_defect(counts: np.ndarray, N: int, k: int):
    """Per-replica unbiased estimates of the k-particle joint and marginals.

    counts has shape (replicas, |S|).  Returns (joint, marg) where joint has
    one axis per tuple slot; distinct-particle joints use falling factorials
    of the state counts.
    """
    R, S = counts.shape
    marg = counts / N
    shape = (R,) + (S,) * k
    joint = np.empty(shape)
    denom = _falling(N, k)
    for tup in itertools.product(range(S), repeat=k):
        mult: dict = {}
        for s in tup:
            mult[s] = mult.get(s, 0) + 1
        val = np.ones(R)
        for s, m in mult.items():
            for i in range(m):
                val = val * (counts[:, s] - i)
        joint[(slice(None),) + tup] = val / denom
    return joint, marg


def chaos_statistic(runs: Mapping[int, Sequence], k: int = 2,
                    n_states: Optional[int] = None,
                    min_relative_precision: Optional[float] = None) -> ChaosReport:
    """Decay of the k-particle factorization defect with system size.

    ``runs`` maps N to a list of replica state vectors (exchangeable particle
    states, integer-coded).  For each N the defect max |mu_{1..k} - prod mu_1|
    is estimated from falling-factorial count statistics (an exact average
    over particle tuples), with a leave-one-replica-out jackknife error; the
    decay exponent is the least-squares slope of log defect against log N.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n_values = sorted(runs)
    if len(n_values) < 2:
        raise ValueError("need at least two system sizes")
    corr: dict = {}
    errs: dict = {}
    for N in n_values:
        reps = [np.asarray(r, dtype=np.int64) for r in runs[N]]
        if len(reps) < 3:
            raise ValueError(f"insufficient replicas at N={N}")
        S = n_states if n_states is not None else int(max(r.max() for r in reps)) + 1
        counts = np.stack([np.bincount(r, minlength=S) for r in reps]).astype(float)
        joint, marg = _factorization_defect(counts, N, k)
        R = counts.shape[0]

        def defect(joint_mean, marg_mean):
            prod = marg_mean
            for _ in range(k - 1):
                prod = np.multiply.outer(prod, marg_mean)
            return float(np.max(np.abs(joint_mean - prod)))

        full = defect(joint.mean(axis=0), marg.mean(axis=0))
        jsum = joint.sum(axis=0)
        msum = marg.sum(axis=0)
        loo = np.array([
            defect((jsum - joint[r]) / (R - 1), (msum - marg[r]) / (R - 1))
            for r in range(R)])
        se = math.sqrt((R - 1) / R * float(((loo - loo.mean()) ** 2).sum()))
        corr[N] = full
        errs[N] = se
        if min_relative_precision is not None and full > 0.0:
            if se / full > min_relative_precision:
                raise ValueError(
                    f"insufficient replicas at N={N}: relative error "
                    f"{se / full:.2f} > {min_relative_precision}")
    xs = np.log(np.asarray(n_values, dtype=float))
    ys = np.log(np.asarray([max(corr[N], 1e-300) for N in n_values]))
    A = np.column_stack((xs, np.ones_like(xs)))
    coef, res, *_ = np.linalg.lstsq(A, ys, rcond=None)
    dof = max(len(n_values) - 2, 1)
    s2 = float(res[0]) / dof if res.size else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return ChaosReport(
        n_values=tuple(n_values),
        correlations=corr,
        stderrs=errs,
        slope=float(coef[0]),
        slope_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
    )
