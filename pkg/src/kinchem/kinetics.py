"""Event-driven simulation of the finite-N jump process with free flight.

Four reaction channels run on competing exponential clocks:

* unary type changes at T-dependent rates, energetically gated by
  T + K_j - K_j1 >= 0,
* slow binary reactions redistributing type and energy of a pair,
* fast binary collisions exchanging kinetic energy within a pair
  (Beta(3/2, 3/2) split of the pair total),
* heat exchange with an infinite bath at inverse temperature beta.

State-dependent rates are simulated exactly by thinning: each channel
proposes at a constant bounding rate and accepts with the ratio of the true
rate to the bound, so the accepted events follow the target law without any
time discretization.  Between jumps particles fly freely on the 3-torus;
positions are advanced lazily (only when a particle jumps or an observer
samples), which keeps the per-event cost O(1).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .model import EnsembleSpec, ParticleState, validate_spec

__all__ = [
    "EnsembleState",
    "EventRecord",
    "Snapshot",
    "sample_initial_state",
    "run",
    "free_flight",
    "unary_event",
    "fast_collision",
    "heat_exchange",
    "slow_binary_event",
    "split_energy",
    "beta_split",
]

CHANNELS = ("unary", "slow_binary", "fast_binary", "heat")


def beta_split(rng) -> float:
    """Fraction of a pair total kept by the first particle, Beta(3/2, 3/2).

    This is the conditional law of X1/(X1+X2) for i.i.d. X_i with density
    c sqrt(x) exp(-b x), the one split law used by the fast-collision,
    slow-binary and heat channels.  Engines accept any replacement sampler
    with the same signature.
    """
    return rng.betavariate(1.5, 1.5)


def split_energy(total: float, frac: float):
    """Split ``total`` as (t1, t2) with t1 + t2 == total exactly in floats.

    The naive t1 = total*frac, t2 = total - t1 can miss closure by one ulp;
    t1 is nudged until the float sum reproduces ``total`` bitwise, so pair
    events never leak energy into the ledger.
    """
    if total <= 0.0:
        return 0.0, 0.0
    t1 = total * frac
    t2 = total - t1
    t1 = total - t2
    for _ in range(8):
        s = t1 + t2
        if s == total:
            break
        t1 = math.nextafter(t1, 0.0 if s > total else math.inf)
    if t1 < 0.0:
        t1 = 0.0
    return t1, t2


@dataclass
class EventRecord:
    """One accepted event: jump time, channel, participants, (type, T) before/after."""

    time: float
    channel: str
    participants: tuple
    before: tuple
    after: tuple


@dataclass
class Snapshot:
    """Immutable view handed to observers at sample times."""

    time: float
    types: np.ndarray        # 1-based type ids
    energies: np.ndarray
    positions: Optional[np.ndarray]
    total_kinetic: float
    total_chemical: float
    bath_exchange: float
    event_counts: dict

    def type_counts(self, n_types: int) -> np.ndarray:
        return np.bincount(self.types - 1, minlength=n_types)


class EnsembleState:
    """N particles with types, kinetic energies, torus positions and directions.

    The energy ledger tracks the exact kinetic/chemical totals (fsum over
    particles) and the cumulative bath exchange Q accumulated in compensated
    arithmetic; with the heat channel off the total T + K is conserved, with
    it on the change equals Q.
    """

    def __init__(self, spec: EnsembleSpec):
        n = spec.n_particles
        self.n = n
        self.box_side = spec.box_side
        self.species_K = list(spec.chem_energies())
        self.species_mass = list(spec.masses())
        self.types = [0] * n            # 0-based internally
        self.energies = [0.0] * n
        self.x = [0.0] * n
        self.y = [0.0] * n
        self.z = [0.0] * n
        self.dirx = [1.0] * n
        self.diry = [0.0] * n
        self.dirz = [0.0] * n
        self.spd = [0.0] * n
        self.last_t = [0.0] * n
        self.sim_time = 0.0
        self.event_counts = {c: 0 for c in CHANNELS}
        self.proposal_counts = {c: 0 for c in CHANNELS}
        self.noop_counts = {c: 0 for c in CHANNELS}
        self._q = 0.0                   # bath exchange, Neumaier compensated
        self._q_comp = 0.0

    # -- ledger ---------------------------------------------------------------

    def total_kinetic(self) -> float:
        return math.fsum(self.energies)

    def total_chemical(self) -> float:
        K = self.species_K
        return math.fsum(K[t] for t in self.types)

    @property
    def bath_exchange(self) -> float:
        return self._q + self._q_comp

    def energy_ledger(self) -> tuple:
        """(total_kinetic, total_chemical, cumulative_bath_exchange)."""
        return self.total_kinetic(), self.total_chemical(), self.bath_exchange

    ledger = energy_ledger

    def add_bath(self, delta: float) -> None:
        t = self._q + delta
        if abs(self._q) >= abs(delta):
            self._q_comp += (self._q - t) + delta
        else:
            self._q_comp += (delta - t) + self._q
        self._q = t

    # -- geometry -------------------------------------------------------------

    def flush_particle(self, i: int, t: float) -> None:
        """Advance particle i's position to time t along its current velocity."""
        dt = t - self.last_t[i]
        if dt != 0.0:
            s = self.spd[i]
            L = self.box_side
            # `% L` of a tiny negative rounds to L itself; fold back to 0
            x = (self.x[i] + s * self.dirx[i] * dt) % L
            y = (self.y[i] + s * self.diry[i] * dt) % L
            z = (self.z[i] + s * self.dirz[i] * dt) % L
            self.x[i] = x if x != L else 0.0
            self.y[i] = y if y != L else 0.0
            self.z[i] = z if z != L else 0.0
            self.last_t[i] = t

    def flush_all(self, t: float) -> None:
        for i in range(self.n):
            self.flush_particle(i, t)
        self.sim_time = t

    def set_energy(self, i: int, energy: float) -> None:
        self.energies[i] = energy
        self.spd[i] = math.sqrt(2.0 * energy / self.species_mass[self.types[i]])

    def set_direction(self, i: int, dx: float, dy: float, dz: float) -> None:
        self.dirx[i] = dx
        self.diry[i] = dy
        self.dirz[i] = dz

    # -- views ----------------------------------------------------------------

    def type_counts(self) -> np.ndarray:
        return np.bincount(self.types, minlength=len(self.species_K))

    def positions(self) -> np.ndarray:
        self.flush_all(self.sim_time)
        return np.column_stack((self.x, self.y, self.z))

    def particle(self, i: int) -> ParticleState:
        self.flush_particle(i, self.sim_time)
        return ParticleState(
            type_id=self.types[i] + 1,
            kinetic_energy=self.energies[i],
            position=(self.x[i], self.y[i], self.z[i]),
            direction=(self.dirx[i], self.diry[i], self.dirz[i]),
        )

    def particles(self) -> list:
        return [self.particle(i) for i in range(self.n)]

    def snapshot(self, with_positions: bool = True) -> Snapshot:
        return Snapshot(
            time=self.sim_time,
            types=np.asarray(self.types, dtype=np.int64) + 1,
            energies=np.asarray(self.energies, dtype=float),
            positions=self.positions() if with_positions else None,
            total_kinetic=self.total_kinetic(),
            total_chemical=self.total_chemical(),
            bath_exchange=self.bath_exchange,
            event_counts=dict(self.event_counts),
        )


def _random_direction(rng):
    while True:
        gx, gy, gz = rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)
        n2 = gx * gx + gy * gy + gz * gz
        if n2 > 1e-300:
            inv = 1.0 / math.sqrt(n2)
            return gx * inv, gy * inv, gz * inv


def sample_initial_state(spec: EnsembleSpec, seed: Optional[int] = None) -> EnsembleState:
    """Draw the initial ensemble: i.i.d. uniform positions on the torus, types
    from the weight vector, energies from the per-type laws, directions
    uniform on the sphere.  Pure function of (spec, seed)."""
    report = validate_spec(spec)
    if not report.ok:
        raise ValueError(f"invalid spec:\n{report}")
    rng = random.Random(spec.rng_seed if seed is None else seed)
    state = EnsembleState(spec)
    weights = spec.initial_distribution.type_weights
    laws = spec.initial_distribution.energy_laws
    cum = []
    acc = 0.0
    for w in weights:
        acc += w
        cum.append(acc)
    cum[-1] = max(cum[-1], 1.0)
    L = spec.box_side
    for i in range(state.n):
        u = rng.random()
        t = 0
        while cum[t] < u:
            t += 1
        state.types[i] = t
        state.x[i] = rng.random() * L
        state.y[i] = rng.random() * L
        state.z[i] = rng.random() * L
        state.set_energy(i, laws[t].sample(rng))
        state.set_direction(i, *_random_direction(rng))
    return state


def free_flight(state: EnsembleState, dt: float) -> EnsembleState:
    """Advance every position by v dt modulo the box; nothing else changes."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    state.flush_all(state.sim_time + dt)
    return state


# -- single-event operations (reference semantics, also used by tests) --------


def _particle_with(p: ParticleState, type_id=None, energy=None, direction=None) -> ParticleState:
    return ParticleState(
        type_id=p.type_id if type_id is None else type_id,
        kinetic_energy=p.kinetic_energy if energy is None else energy,
        position=p.position,
        direction=p.direction if direction is None else direction,
    )


def _unary_rates(spec: EnsembleSpec, j0: int, T: float) -> list:
    """Per-target unary rates for a 0-based type j0 at kinetic energy T."""
    J = spec.n_types
    r = spec.rates
    K = spec.chem_energies()
    out = [0.0] * J
    if r.unary_fn is not None:
        for j1 in range(J):
            if j1 != j0:
                out[j1] = r.unary_fn(j0 + 1, j1 + 1, T)
        return out
    w = r.unary
    for j1 in range(J):
        if j1 != j0 and T + K[j0] - K[j1] >= 0.0:
            out[j1] = w[j0][j1]
    return out


def unary_event(p: ParticleState, spec: EnsembleSpec, rng) -> ParticleState:
    """Attempt one unary jump for a particle whose clock just fired.

    The target is drawn proportionally to the per-target rates; conservation
    sets T1 = T + K_j - K_j1.  An energetically forbidden draw is a no-op.
    """
    j0 = p.type_id - 1
    rates = _unary_rates(spec, j0, p.kinetic_energy)
    total = math.fsum(rates)
    if total <= 0.0:
        return p
    u = rng.random() * total
    acc = 0.0
    j1 = 0
    for j1, val in enumerate(rates):
        acc += val
        if u < acc:
            break
    K = spec.chem_energies()
    T1 = p.kinetic_energy + K[j0] - K[j1]
    if T1 < 0.0:
        return p
    return _particle_with(p, type_id=j1 + 1, energy=T1, direction=_random_direction(rng))


def fast_collision(p: ParticleState, q: ParticleState, spec: EnsembleSpec, rng,
                   split: Callable = beta_split):
    """Kac exchange: the pair total S = T + T' is resplit as (S X, S (1-X))."""
    S = p.kinetic_energy + q.kinetic_energy
    t1, t2 = split_energy(S, split(rng))
    return (
        _particle_with(p, energy=t1, direction=_random_direction(rng)),
        _particle_with(q, energy=t2, direction=_random_direction(rng)),
    )


def heat_exchange(p: ParticleState, spec: EnsembleSpec, rng,
                  split: Callable = beta_split):
    """Collision with a bath molecule of energy xi ~ Gamma(3/2, beta):
    the particle keeps a Beta(3/2,3/2) fraction of T + xi."""
    beta = spec.rates.bath_beta
    xi = rng.gammavariate(1.5, 1.0 / beta)
    t1, _ = split_energy(p.kinetic_energy + xi, split(rng))
    return _particle_with(p, energy=t1, direction=_random_direction(rng))


def slow_binary_event(p: ParticleState, q: ParticleState, spec: EnsembleSpec, rng,
                      split: Callable = beta_split):
    """Reactive pair collision: draw outcome types from the configured kernel,
    split the disposable energy E = T + T' + K_j + K_j' - K_j1 - K_j1'.
    E < 0 is a no-op (the pair is returned unchanged)."""
    K = spec.chem_energies()
    outs = spec.rates.binary_kernel.outcomes(p.type_id, q.type_id)
    u = rng.random()
    acc = 0.0
    j1, j1p = p.type_id, q.type_id
    for (a, b), prob in outs:
        acc += prob
        if u < acc:
            j1, j1p = a, b
            break
    E = (p.kinetic_energy + q.kinetic_energy) + (
        (K[p.type_id - 1] + K[q.type_id - 1]) - (K[j1 - 1] + K[j1p - 1]))
    if E < 0.0:
        return p, q
    t1, t2 = split_energy(E, split(rng))
    return (
        _particle_with(p, type_id=j1, energy=t1, direction=_random_direction(rng)),
        _particle_with(q, type_id=j1p, energy=t2, direction=_random_direction(rng)),
    )


# -- trajectory driver ---------------------------------------------------------


def run(state: EnsembleState, spec: EnsembleSpec, t_end: float, *,
        seed: Optional[int] = None, rng: Optional[random.Random] = None,
        observers: Iterable[Callable] = (), sample_every: Optional[float] = None,
        record_events: bool = False, max_events: Optional[int] = None,
        track_positions: bool = True, split: Callable = beta_split):
    """Simulate the jump process from state.sim_time to t_end.

    Exact competing-clock simulation: one Poisson proposal stream per channel
    at a constant bounding rate, thinned to the true state-dependent rates.
    Observers are called with a Snapshot at t0 and then every ``sample_every``
    time units (and at t_end).  ``track_positions=False`` skips free flight
    and direction resampling for runs whose observables ignore geometry; the
    law of (types, energies) is unchanged.  Deterministic given (state, seed).

    Returns (state, events) where events is the list of accepted EventRecords
    (empty unless record_events).
    """
    if t_end < state.sim_time:
        raise ValueError("t_end must be >= state.sim_time")
    if rng is None:
        rng = random.Random(spec.rng_seed + 1 if seed is None else seed)
    n = state.n
    J = spec.n_types
    K = state.species_K
    r = spec.rates

    # channel bounds for thinning
    sup = r.unary_bounds()
    usup_type = [math.fsum(sup[j][j1] for j1 in range(J) if j1 != j) for j in range(J)]
    ubar = max(usup_type) if J else 0.0
    R_unary = n * ubar
    bmax = max((r.slow_binary[a][b] for a in range(J) for b in range(J)), default=0.0)
    fmax = max((r.fast_binary[a][b] for a in range(J) for b in range(J)), default=0.0)
    R_slow = (n - 1) * bmax
    R_fast = (n - 1) * spec.scale_fast * fmax
    R_heat = n * spec.scale_heat * r.heat_rate
    R_total = R_unary + R_slow + R_fast + R_heat
    c1 = R_unary
    c2 = c1 + R_slow
    c3 = c2 + R_fast

    unary_fn = r.unary_fn
    slow_fn = r.slow_fn
    w = r.unary
    bmat = r.slow_binary
    fmat = r.fast_binary
    kernel = r.binary_kernel
    identity_kernel = kernel.kind == "identity"

    types = state.types
    T = state.energies
    mass = state.species_mass
    events = []
    counts = state.event_counts
    props = state.proposal_counts
    noops = state.noop_counts

    uniform = rng.random
    randrange = rng.randrange
    gauss = rng.gauss

    def new_direction(i):
        while True:
            gx, gy, gz = gauss(0.0, 1.0), gauss(0.0, 1.0), gauss(0.0, 1.0)
            n2 = gx * gx + gy * gy + gz * gz
            if n2 > 1e-300:
                inv = 1.0 / math.sqrt(n2)
                state.dirx[i] = gx * inv
                state.diry[i] = gy * inv
                state.dirz[i] = gz * inv
                return

    def touch(i, t):
        # bring particle i to the event time before its velocity changes
        if track_positions:
            state.flush_particle(i, t)
        else:
            state.last_t[i] = t

    def set_energy(i, e):
        T[i] = e
        state.spd[i] = math.sqrt(2.0 * e / mass[types[i]])
        if track_positions:
            new_direction(i)

    last_emit = [None]

    def emit(t_obs):
        if t_obs == last_emit[0]:
            return
        last_emit[0] = t_obs
        if track_positions:
            state.flush_all(t_obs)
        state.sim_time = t_obs
        snap = state.snapshot(with_positions=track_positions)
        for obs in observers:
            obs(snap)

    observers = tuple(observers)
    t = state.sim_time
    next_obs = None
    if observers:
        emit(t)
        if sample_every is not None:
            next_obs = t + sample_every

    n_events = 0
    while True:
        if max_events is not None and n_events >= max_events:
            break
        if R_total > 0.0:
            t_next = t + rng.expovariate(R_total)
        else:
            t_next = math.inf
        while next_obs is not None and next_obs <= min(t_next, t_end):
            emit(next_obs)
            next_obs += sample_every
        if t_next > t_end:
            t = t_end
            break
        t = t_next

        u = uniform() * R_total
        if u < c1:
            # unary channel
            props["unary"] += 1
            i = randrange(n)
            j0 = types[i]
            Ti = T[i]
            if unary_fn is None:
                total = 0.0
                for j1 in range(J):
                    if j1 != j0 and Ti + K[j0] - K[j1] >= 0.0:
                        total += w[j0][j1]
            else:
                total = 0.0
                for j1 in range(J):
                    if j1 != j0:
                        total += unary_fn(j0 + 1, j1 + 1, Ti)
                if total > usup_type[j0] * (1.0 + 1e-12):
                    raise ValueError(
                        f"unary rate plug-in exceeds its declared supremum "
                        f"({total} > {usup_type[j0]} for type {j0 + 1})")
            if total <= 0.0 or uniform() * ubar > total:
                continue
            # accepted: choose the target proportionally to the rates
            pick = uniform() * total
            acc = 0.0
            j1 = j0
            for cand in range(J):
                if cand == j0:
                    continue
                if unary_fn is None:
                    rate = w[j0][cand] if Ti + K[j0] - K[cand] >= 0.0 else 0.0
                else:
                    rate = unary_fn(j0 + 1, cand + 1, Ti)
                acc += rate
                if pick < acc:
                    j1 = cand
                    break
            T1 = Ti + K[j0] - K[j1]
            if T1 < 0.0:
                noops["unary"] += 1
                continue
            touch(i, t)
            before = ((j0 + 1, Ti),)
            types[i] = j1
            set_energy(i, T1)
            counts["unary"] += 1
            n_events += 1
            if record_events:
                events.append(EventRecord(t, "unary", (i,), before, ((j1 + 1, T1),)))
        elif u < c2:
            # slow binary channel
            props["slow_binary"] += 1
            i = randrange(n)
            k = randrange(n - 1)
            j = k if k < i else k + 1
            a, b = types[i], types[j]
            if slow_fn is None:
                rate = bmat[a][b]
            else:
                rate = slow_fn(a + 1, b + 1, T[i], T[j])
            if rate < bmax and uniform() * bmax > rate:
                continue
            if identity_kernel:
                j1, j1p = a, b
            else:
                outs = kernel.outcomes(a + 1, b + 1)
                pick = uniform()
                acc = 0.0
                j1, j1p = a + 1, b + 1
                for (x1, x2), prob in outs:
                    acc += prob
                    if pick < acc:
                        j1, j1p = x1, x2
                        break
                j1 -= 1
                j1p -= 1
            E = (T[i] + T[j]) + ((K[a] + K[b]) - (K[j1] + K[j1p]))
            if E < 0.0:
                noops["slow_binary"] += 1
                continue
            t1, t2 = split_energy(E, split(rng))
            touch(i, t)
            touch(j, t)
            before = ((a + 1, T[i]), (b + 1, T[j]))
            types[i] = j1
            types[j] = j1p
            set_energy(i, t1)
            set_energy(j, t2)
            counts["slow_binary"] += 1
            n_events += 1
            if record_events:
                events.append(EventRecord(t, "slow_binary", (i, j), before,
                                          ((j1 + 1, t1), (j1p + 1, t2))))
        elif u < c3:
            # fast binary channel
            props["fast_binary"] += 1
            i = randrange(n)
            k = randrange(n - 1)
            j = k if k < i else k + 1
            fij = fmat[types[i]][types[j]]
            if fij < fmax and uniform() * fmax > fij:
                continue
            S = T[i] + T[j]
            t1, t2 = split_energy(S, split(rng))
            touch(i, t)
            touch(j, t)
            before = ((types[i] + 1, T[i]), (types[j] + 1, T[j]))
            set_energy(i, t1)
            set_energy(j, t2)
            counts["fast_binary"] += 1
            n_events += 1
            if record_events:
                events.append(EventRecord(t, "fast_binary", (i, j), before,
                                          ((types[i] + 1, t1), (types[j] + 1, t2))))
        else:
            # heat channel (always accepted: constant rate)
            props["heat"] += 1
            i = randrange(n)
            xi = rng.gammavariate(1.5, 1.0 / r.bath_beta)
            t1, _ = split_energy(T[i] + xi, split(rng))
            touch(i, t)
            before = ((types[i] + 1, T[i]),)
            state.add_bath(t1 - T[i])
            set_energy(i, t1)
            counts["heat"] += 1
            n_events += 1
            if record_events:
                events.append(EventRecord(t, "heat", (i,), before, ((types[i] + 1, t1),)))

    if track_positions:
        state.flush_all(t)
    state.sim_time = t
    if observers:
        emit(t)
    return state, events
