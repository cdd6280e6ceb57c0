import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from kinchem import oracle as O
from kinchem.kinetics import run, sample_initial_state
from kinchem.model import TypeKernel
from conftest import make_two_state


# -- model validation -----------------------------------------------------------


def test_pair_model_validates_rows_and_symmetry():
    k = np.eye(4)
    O.PairModel(2, k, 1.0)
    bad = k.copy()
    bad[0, 0] = 0.5
    with pytest.raises(ValueError, match="sum"):
        O.PairModel(2, bad, 1.0)
    asym = np.eye(4)
    asym[1] = [0.0, 0.0, 0.5, 0.5]      # (0,1) behaves differently from (1,0)
    with pytest.raises(ValueError, match="symmetric"):
        O.PairModel(2, asym, 1.0)
    with pytest.raises(ValueError, match="rate"):
        O.PairModel(2, k, 0.0)


# -- classification ---------------------------------------------------------------


def test_classify_single_pair():
    cls = O.classify([(1, 2)], anchor=1)
    assert cls.connected and cls.essential and cls.anchored
    assert cls.nonessential == ()


def test_classify_repeated_pair_first_becomes_redundant():
    cls = O.classify([(1, 2), (1, 2)], anchor=1)
    assert cls.connected and not cls.essential
    assert cls.nonessential == (0,)


def test_classify_disjoint_pairs_not_connected():
    cls = O.classify([(1, 2), (3, 4)], anchor=1)
    assert not cls.connected


def test_classify_rejects_degenerate_pair():
    with pytest.raises(ValueError):
        O.classify([(1, 1)])


def test_essential_needs_one_endpoint_absent_later():
    # both endpoints of (2,3) recur later: redundant even without repetition
    cls = O.classify([(2, 3), (1, 2), (1, 3)], anchor=1)
    assert cls.connected and cls.nonessential == (0,)


# -- influence-history extraction ----------------------------------------------------


def test_extract_empty_when_anchor_never_interacts():
    assert O.extract_theta_v([(2, 3), (3, 4)], 1) == ()


def test_extract_simple_and_backward_closure():
    assert O.extract_theta_v([(1, 2), (3, 4)], 1) == ((1, 2),)
    assert O.extract_theta_v([(2, 3), (1, 2)], 1) == ((2, 3), (1, 2))
    assert O.extract_theta_v([(3, 4), (1, 2)], 1) == ((1, 2),)


def _satisfies_closure(log, subset_idx, v):
    """Check the two defining conditions for a candidate index subset."""
    last = max((i for i, p in enumerate(log) if v in p), default=None)
    if last is None:
        return subset_idx == ()
    chosen = set(subset_idx)
    for i, p in enumerate(log):
        if v in p and i not in chosen:
            return False
    for i in chosen:
        for k in range(i):
            if set(log[k]) & set(log[i]) and k not in chosen:
                return False
    return True


def test_extract_is_minimal_closure_brute_force():
    rng = random.Random(5)
    for _ in range(300):
        n = rng.randrange(0, 7)
        log = []
        for _ in range(n):
            i = rng.randrange(1, 6)
            j = rng.randrange(1, 5)
            log.append((i, j if j < i else j + 1))
        got_idx = O.extract_theta_indices(log, 1)
        assert O.extract_theta_v(log, 1) == tuple(log[i] for i in got_idx)
        assert _satisfies_closure(log, got_idx, 1)
        # minimality: every satisfying subset contains the extracted one
        for r in range(len(log) + 1):
            for cand in itertools.combinations(range(len(log)), r):
                if _satisfies_closure(log, cand, 1):
                    assert set(got_idx) <= set(cand)


def test_extract_from_engine_event_log():
    kernel = TypeKernel()
    spec = make_two_state(n=6, w12=0.0, w21=0.0, fast=0.5, slow=0.5,
                          kernel=kernel)
    state = sample_initial_state(spec, 3)
    _, events = run(state, spec, 3.0, seed=4, record_events=True,
                    track_positions=False)
    pairs = O.pairs_from_event_log(events)
    assert pairs
    theta = O.extract_theta_v(pairs, 0)
    if theta:
        assert 0 in theta[-1]
        cls = O.classify(theta, anchor=0)
        assert cls.connected and cls.anchored


# -- counting -------------------------------------------------------------------------


def test_scaled_essential_count_trivial_and_limit():
    assert O.scaled_essential_count(1, 7) == 1.0
    assert abs(O.scaled_essential_count(3, 10 ** 9) - 6.0) < 1e-6
    for n in range(1, 5):
        for N in range(n + 1, 9):
            assert O.scaled_essential_count(n, N) <= math.factorial(n) + 1e-12


def test_scaled_essential_count_degenerate_raises():
    with pytest.raises(ValueError, match="degenerate"):
        O.scaled_essential_count(5, 5)


def naive_counts_by_type(n, N):
    allp = list(itertools.combinations(range(1, N + 1), 2))
    out = {}
    for seq in itertools.product(allp, repeat=n):
        cls = O.classify(seq, anchor=1)
        if cls.connected and cls.anchored:
            key = frozenset(cls.nonessential)
            out[key] = out.get(key, 0) + 1
    return out


def test_counts_match_exhaustive_enumeration():
    for n in (1, 2, 3):
        for N in (3, 4, 5, 6):
            assert O.count_sequences_by_type(n, N) == naive_counts_by_type(n, N)


def test_product_formula_exact_against_enumeration():
    for n in (1, 2, 3):
        for N in (4, 5, 6):
            ess = naive_counts_by_type(n, N).get(frozenset(), 0)
            assert Fraction(ess, (N - 1) ** n) == \
                O.scaled_essential_count(n, N, exact=True)


def test_nonessential_scaled_counts_vanish_monotonically():
    for n in (2, 3, 4):
        scaled = []
        for N in (10, 100, 1000, 10000):
            counts = O.count_sequences_by_type(n, N)
            scaled.append(sum(Fraction(v, (N - 1) ** n)
                              for key, v in counts.items() if key))
        assert all(b < a for a, b in zip(scaled, scaled[1:]))
        assert scaled[-1] < scaled[0] / 50


def test_simplex_volume_identity_by_monte_carlo():
    rng = np.random.default_rng(17)
    m = 200000
    for n in range(1, 7):
        draws = rng.random((m, n))
        hit = np.mean(np.all(np.diff(draws, axis=1) > 0, axis=1)) if n > 1 else 1.0
        target = 1.0 / math.factorial(n)
        se = math.sqrt(target * (1 - target) / m)
        assert abs(hit - target) <= 4 * se + 1e-12


# -- series ------------------------------------------------------------------------------


def test_pair_operators_do_not_expand_total_variation():
    rng = np.random.default_rng(19)
    model = O.contagion_model(0.5, 1.0)
    for _ in range(50):
        n_lab = rng.integers(2, 5)
        pairs = []
        for _ in range(rng.integers(1, 5)):
            a, b = rng.choice(n_lab, size=2, replace=False)
            pairs.append((int(a), int(b)))
        mu = rng.standard_normal(2 ** n_lab)
        joint = mu.reshape((2,) * int(n_lab))
        S = 2
        for (a, b) in pairs:
            moved = np.moveaxis(joint, (a, b), (n_lab - 2, n_lab - 1))
            shape = moved.shape
            flat = moved.reshape(-1, S * S) @ model.kernel
            joint = np.moveaxis(flat.reshape(shape), (n_lab - 2, n_lab - 1),
                                (a, b))
        assert np.abs(joint).sum() <= np.abs(mu).sum() + 1e-12


def test_series_time_zero_returns_initial_measure():
    model = O.contagion_model(0.5, 0.3)
    mu0 = np.array([0.25, 0.75])
    res = O.series_marginal(model, mu0, 0.0, n_max=3, n_particles=4)
    assert np.allclose(res.marginal, mu0, atol=1e-12)


def test_series_order_zero_is_exponentially_weighted_identity():
    lam, t = 0.2, 0.7
    model = O.contagion_model(0.5, lam)
    mu0 = np.array([0.25, 0.75])
    res = O.series_marginal(model, mu0, t, n_max=0, n_particles=5)
    assert np.allclose(res.marginal, math.exp(-2 * lam * t) * mu0, atol=1e-14)


def test_series_tail_precondition_enforced():
    model = O.contagion_model(0.5, 1.0)
    with pytest.raises(ValueError, match="tail"):
        O.series_marginal(model, np.array([0.5, 0.5]), 1.0, n_max=2,
                          n_particles=4, tol=1e-6)


def test_series_matches_master_equation_within_geometric_tail():
    mu0 = np.array([0.7, 0.3])
    for lam_t in (0.1, 0.2):
        for model in (O.contagion_model(0.6, lam_t), O.voter_model(lam_t)):
            for N in (3, 4, 5, 6):
                res = O.series_marginal(model, mu0, 1.0, n_max=4,
                                        n_particles=N)
                exact = O.exact_marginal(model, mu0, 1.0, N)
                err = float(np.max(np.abs(res.marginal - exact)))
                geometric = sum((2 * lam_t) ** n for n in range(5, 200))
                assert err <= geometric
                # missing mass is itself below the geometric tail
                assert 0.0 <= 1.0 - res.total_mass <= geometric


def test_series_limit_close_to_large_finite_N():
    model = O.contagion_model(0.6, 0.1)
    mu0 = np.array([0.7, 0.3])
    lim = O.series_marginal(model, mu0, 1.0, n_max=3, n_particles=None)
    big = O.series_marginal(model, mu0, 1.0, n_max=3, n_particles=400)
    small = O.series_marginal(model, mu0, 1.0, n_max=3, n_particles=20)
    d_big = np.max(np.abs(lim.marginal - big.marginal))
    d_small = np.max(np.abs(lim.marginal - small.marginal))
    assert d_big < d_small            # finite-N corrections shrink like 1/N
    assert d_big < 5e-5


def test_history_length_probabilities_against_simulation():
    lam, t, N = 0.15, 1.0, 5
    rng = random.Random(29)
    reps = 120000
    counts = np.zeros(4)
    n_events = np.random.default_rng(31).poisson(N * lam * t, size=reps)
    for r in range(reps):
        pairs = []
        for _ in range(n_events[r]):
            i = rng.randrange(N)
            k = rng.randrange(N - 1)
            pairs.append((i + 1, (k if k < i else k + 1) + 1))
        ln = len(O.extract_theta_v(pairs, 1))
        if ln < 4:
            counts[ln] += 1
    freq = counts / reps
    model = O.voter_model(lam)
    res = O.series_marginal(model, np.array([0.5, 0.5]), t, n_max=3,
                            n_particles=N)
    for n in range(4):
        se = math.sqrt(max(freq[n], 1e-9) * (1 - freq[n]) / reps)
        assert abs(freq[n] - res.mass_by_length[n]) <= 4 * se + 1e-4


def test_semigroup_composition_reaches_long_horizons():
    # lambda * t = 0.6: a single truncated series would not converge, the
    # composed flow does, and finite-N exact marginals approach it like 1/N
    model = O.contagion_model(alpha=0.6, rate=0.3)
    mu0 = np.array([0.8, 0.2])
    mu6, tail6 = O.series_marginal_semigroup(model, mu0, 2.0, n_max=5, n_steps=6)
    mu12, _ = O.series_marginal_semigroup(model, mu0, 2.0, n_max=5, n_steps=12)
    assert np.max(np.abs(mu12 - mu6)) < 1e-3
    assert tail6 < 1e-5
    e8 = O.exact_marginal(model, mu0, 2.0, 8)
    e10 = O.exact_marginal(model, mu0, 2.0, 10)
    d8 = np.max(np.abs(e8 - mu12))
    d10 = np.max(np.abs(e10 - mu12))
    assert d10 < d8                       # finite-size gap shrinks with N
    richardson = e10 + (e10 - e8) / (10.0 / 8.0 - 1.0)
    assert np.max(np.abs(richardson - mu12)) < 2e-3
    with pytest.raises(ValueError):
        O.series_marginal_semigroup(model, mu0, 1.0, n_max=3, n_steps=0)


# -- exact oracles and chaos ----------------------------------------------------------------


def test_master_generator_conserves_probability():
    model = O.contagion_model(0.5, 1.0)
    L = O.master_generator(model, 3)
    assert np.max(np.abs(L.sum(axis=1))) < 1e-12
    mu0 = np.array([0.4, 0.6])
    joint = O.exact_joint(model, mu0, 0.8, 3)
    assert abs(joint.sum() - 1.0) < 1e-12


def test_exact_pair_correlation_zero_at_t0_positive_later():
    model = O.contagion_model(0.5, 1.0)
    mu0 = np.array([0.6, 0.4])
    assert O.exact_pair_correlation(model, mu0, 0.0, 4) < 1e-14
    assert O.exact_pair_correlation(model, mu0, 1.0, 4) > 1e-4


def test_exact_pair_correlation_decreases_with_system_size():
    model = O.contagion_model(0.5, 1.0)
    mu0 = np.array([0.6, 0.4])
    vals = [O.exact_pair_correlation(model, mu0, 1.0, N) for N in (4, 6, 8)]
    assert vals[0] > vals[1] > vals[2]
    # roughly 1/(N-1) decay
    scaled = [v * (N - 1) for v, N in zip(vals, (4, 6, 8))]
    assert max(scaled) / min(scaled) < 1.25


def test_chaos_statistic_recovers_known_decay():
    model = O.contagion_model(0.5, 1.0)
    mu0 = np.array([0.6, 0.4])
    runs = {N: [O.simulate_pair_system(model, N, 0.5, mu0, seed=997 * N + r)
                for r in range(400)] for N in (50, 100, 200)}
    rep = O.chaos_statistic(runs, k=2, n_states=2)
    assert -1.6 < rep.slope < -0.5
    assert all(rep.correlations[N] > 0 for N in (50, 100, 200))


def test_chaos_statistic_insufficient_replicas_flagged():
    model = O.contagion_model(0.5, 1.0)
    mu0 = np.array([0.6, 0.4])
    runs = {N: [O.simulate_pair_system(model, N, 0.5, mu0, seed=r)
                for r in range(5)] for N in (50, 100)}
    with pytest.raises(ValueError, match="insufficient"):
        O.chaos_statistic(runs, k=2, n_states=2, min_relative_precision=0.05)


def test_chaos_statistic_on_particle_ensemble_types():
    # type correlations created by a reactive pair kernel in the particle
    # engine also factorize as the ensemble grows
    kernel = TypeKernel(kind="table", table=(
        ((1, 1), (((1, 1), 0.5), ((2, 2), 0.5))),
        ((1, 2), (((1, 1), 0.5), ((2, 2), 0.5))),
        ((2, 1), (((1, 1), 0.5), ((2, 2), 0.5))),
        ((2, 2), (((1, 1), 0.5), ((2, 2), 0.5))),
    ))
    runs = {}
    for N in (30, 120):
        reps = []
        for r in range(250):
            spec = make_two_state(n=N, k2=0.0, w12=0.0, w21=0.0, fast=0.0,
                                  slow=1.0, kernel=kernel, seed=1000 + r)
            state = sample_initial_state(spec, 1000 + r)
            run(state, spec, 0.8, seed=5000 + r, track_positions=False)
            reps.append(np.asarray(state.types))
        runs[N] = reps
    rep = O.chaos_statistic(runs, k=2, n_states=2)
    assert rep.correlations[30] > rep.correlations[120] > 0.0
    assert rep.slope < -0.4


def test_chaos_statistic_k3_runs():
    model = O.contagion_model(0.5, 1.0)
    mu0 = np.array([0.6, 0.4])
    runs = {N: [O.simulate_pair_system(model, N, 0.5, mu0, seed=7 * N + r)
                for r in range(200)] for N in (30, 90)}
    rep = O.chaos_statistic(runs, k=3, n_states=2)
    assert rep.correlations[30] > rep.correlations[90] > 0
