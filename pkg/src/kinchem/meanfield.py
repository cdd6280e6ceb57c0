"""Deterministic integration of the one-particle kinetic equation and its
fast-scale reductions.

The full equation evolves the joint density p_t(j, T) on an energy grid under
four transport terms mirroring the particle channels: unary type changes
(exact energy shifts, deposited onto bracketing nodes), slow binary reactions
(feature-gated, constant rates), fast kinetic-energy exchange, and bath
contact.  All channels are discretized conservatively in mass coordinates;
linear two-node deposition preserves both the deposited mass and its mean
energy, so the discrete operators inherit the continuum conservation laws up
to grid-edge clipping.

In the limit of infinitely fast exchange and bath contact the kinetic
marginal is pinned at density c sqrt(T) exp(-beta T) and only the type
concentrations evolve; that reduction is integrated directly as an ODE with
Maxwell-averaged unary rates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _sintegrate
from scipy.special import betainc, gammaincc

from .model import EnsembleSpec

__all__ = [
    "DensityField",
    "MacroState",
    "ReducedTrajectory",
    "MeanFieldTrajectory",
    "BoltzmannIntegrator",
    "integrate_boltzmann",
    "reduced_macro_ode",
    "reduced_two_state",
    "survival_gbeta",
    "onsager_flux",
    "maxwell_unary_rates",
    "energy_grid",
    "gamma32_density",
    "field_from_laws",
    "field_from_spec",
    "rk4_step",
]


# -- closed-form pieces --------------------------------------------------------


def survival_gbeta(r: float, beta: float) -> float:
    """Upper tail P(xi > r) of the bath energy law with density c sqrt(x) e^{-beta x}."""
    if r < 0.0:
        raise ValueError("r must be >= 0")
    if beta <= 0.0:
        raise ValueError("beta must be > 0")
    return float(gammaincc(1.5, beta * r))


def onsager_flux(A: float, u12: float, u21: float, beta: float) -> float:
    """Reaction flux as a function of the affinity for the two-state chain.

    J1 = (1 - e^{-beta A}) / (u21^{-1} + u12^{-1} e^{-beta A}); zero exactly
    at A = 0, sign equal to sign(A), saturating at u21 and -u12.  Equals
    dc1/dt on trajectories normalized to unit total concentration.
    """
    if u12 <= 0.0 or u21 <= 0.0:
        raise ValueError("rates must be positive")
    x = -beta * A
    if x > 700.0:
        return -u12
    e = math.exp(x)
    return (1.0 - e) / (1.0 / u21 + e / u12)


def maxwell_unary_rates(spec: EnsembleSpec, beta: Optional[float] = None) -> np.ndarray:
    """Unary rates averaged over the equilibrium kinetic-energy law.

    For the threshold family this is w_jj' * P(T >= K_j' - K_j); a plugged-in
    rate function is averaged by quadrature over the allowed energy range.
    """
    if beta is None:
        beta = spec.rates.bath_beta
    J = spec.n_types
    K = spec.chem_energies()
    v = np.zeros((J, J))
    r = spec.rates
    norm = 2.0 * beta ** 1.5 / math.sqrt(math.pi)
    for j in range(J):
        for j1 in range(J):
            if j1 == j:
                continue
            thresh = max(0.0, K[j1] - K[j])
            if r.unary_fn is None:
                v[j, j1] = r.unary[j][j1] * survival_gbeta(thresh, beta)
            else:
                val, _ = _sintegrate.quad(
                    lambda T: r.unary_fn(j + 1, j1 + 1, T) * norm * math.sqrt(T)
                    * math.exp(-beta * T),
                    thresh, np.inf, limit=200)
                v[j, j1] = val
    return v


def reduced_two_state(spec: EnsembleSpec):
    """Effective (v12, v21) of the two-state chain in the fast-scale limit.

    v21 = w21 (downhill, always allowed) and v12 = g_beta(K2 - K1) * w12,
    the uphill rate thinned by the probability that the kinetic energy
    clears the threshold.
    """
    if spec.n_types != 2:
        raise ValueError("reduced_two_state requires exactly two species")
    if spec.rates.unary_fn is not None:
        raise ValueError("reduced_two_state requires threshold-family rates")
    v = maxwell_unary_rates(spec)
    return float(v[0, 1]), float(v[1, 0])


@dataclass(frozen=True)
class MacroState:
    """Point of the reduced dynamics: inverse temperature and concentrations."""

    beta: float
    concentrations: tuple

    def __post_init__(self):
        object.__setattr__(self, "concentrations",
                           tuple(float(c) for c in self.concentrations))

    @property
    def total(self) -> float:
        return math.fsum(self.concentrations)


@dataclass
class ReducedTrajectory:
    times: np.ndarray
    concentrations: np.ndarray   # shape (n_times, J)
    beta: float
    rates: np.ndarray            # Maxwell-averaged v matrix

    def final_state(self) -> MacroState:
        return MacroState(self.beta, tuple(self.concentrations[-1]))

    def equilibrium(self) -> np.ndarray:
        """Stationary concentrations with the same total (two-state only)."""
        if self.concentrations.shape[1] != 2:
            raise ValueError("closed-form equilibrium implemented for J = 2")
        v12, v21 = self.rates[0, 1], self.rates[1, 0]
        c = self.concentrations[0].sum()
        ratio = v21 / v12
        c1 = c * ratio / (1.0 + ratio)
        return np.array([c1, c - c1])


def macro_vector_field(v: np.ndarray) -> Callable:
    """dc_j/dt = sum_j' (c_j' v_j'j - c_j v_jj') as a callable on c."""
    v = np.asarray(v, dtype=float)
    out_rate = v.sum(axis=1)

    def f(c):
        c = np.asarray(c, dtype=float)
        return c @ v - c * out_rate

    return f


def rk4_step(f: Callable, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def reduced_macro_ode(state: MacroState, spec: EnsembleSpec, t_end: float,
                      n_samples: int = 201) -> ReducedTrajectory:
    """Integrate the concentration dynamics on the fixed-beta equilibrium
    manifold with Maxwell-averaged unary rates; total concentration is
    conserved by the antisymmetric flux structure of the vector field."""
    v = maxwell_unary_rates(spec, beta=state.beta)
    f = macro_vector_field(v)
    times = np.linspace(0.0, t_end, n_samples)
    sol = _sintegrate.solve_ivp(
        lambda t, c: f(c), (0.0, t_end), np.asarray(state.concentrations),
        method="DOP853", t_eval=times, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(f"reduced ODE integration failed: {sol.message}")
    return ReducedTrajectory(times=sol.t, concentrations=sol.y.T,
                             beta=state.beta, rates=v)


# -- energy-grid machinery -------------------------------------------------------


def energy_grid(beta: float, chem_energies: Sequence[float] = (),
                m: int = 512, t_max: Optional[float] = None) -> np.ndarray:
    """Uniform grid 0 = T_0 < ... < T_M = t_max; default span covers the
    chemical-energy range plus a 30/beta thermal tail."""
    if t_max is None:
        span = (max(chem_energies) - min(chem_energies)) if chem_energies else 0.0
        t_max = span + 30.0 / beta
    return np.linspace(0.0, t_max, m + 1)


def gamma32_density(grid: np.ndarray, beta: float) -> np.ndarray:
    """Equilibrium kinetic density c sqrt(T) exp(-beta T) on the grid."""
    c = 2.0 * beta ** 1.5 / math.sqrt(math.pi)
    return c * np.sqrt(grid) * np.exp(-beta * grid)


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    w = np.full(grid.size, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass
class DensityField:
    """Discretized joint density p(j, T): values[j, k] = p(j, T_k) >= 0.

    Normalization is the trapezoid rule summed over types; the integrators
    renormalize after every step and clip negative undershoots.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.size:
            raise ValueError("values must have shape (J, len(grid))")
        h = np.diff(self.grid)
        if h.size == 0 or not np.allclose(h, h[0], rtol=1e-9):
            raise ValueError("grid must be uniform and strictly increasing")

    @property
    def n_types(self) -> int:
        return self.values.shape[0]

    def weights(self) -> np.ndarray:
        return _trapezoid_weights(self.grid)

    def masses(self) -> np.ndarray:
        """Per-type probability masses (trapezoid)."""
        return self.values @ self.weights()

    def norm(self) -> float:
        return float(self.masses().sum())

    def concentrations(self, c_total: float = 1.0) -> np.ndarray:
        return c_total * self.masses()

    def mean_energy(self) -> float:
        w = self.weights()
        return float((self.values @ (w * self.grid)).sum() / self.norm())

    def renormalize(self) -> float:
        """Clip negatives and rescale to unit mass; returns the pre-scaling drift."""
        np.clip(self.values, 0.0, None, out=self.values)
        n = self.norm()
        if n <= 0.0:
            raise ValueError("field has no mass")
        self.values /= n
        return abs(n - 1.0)

    def marginal(self, j: int) -> np.ndarray:
        """Normalized kinetic-energy density of (1-based) type j."""
        mass = self.masses()[j - 1]
        return self.values[j - 1] / mass

    def copy(self) -> "DensityField":
        return DensityField(self.grid.copy(), self.values.copy())


def field_from_laws(grid: np.ndarray, weights: Sequence[float], laws) -> DensityField:
    """Nodal density for per-type weights and kinetic-energy laws."""
    grid = np.asarray(grid, dtype=float)
    vals = np.zeros((len(weights), grid.size))
    w = _trapezoid_weights(grid)
    h = grid[1] - grid[0]
    for j, (wt, law) in enumerate(zip(weights, laws)):
        if law.law == "gamma":
            dens = gamma32_density(grid, law.beta)
        elif law.law == "uniform":
            dens = ((grid >= law.low) & (grid <= law.high)).astype(float)
            if dens.sum() == 0:
                raise ValueError("uniform law lies outside the grid")
        elif law.law == "point":
            dens = np.zeros(grid.size)
            k = min(int(law.value / h), grid.size - 2)
            frac = (law.value - grid[k]) / h
            dens[k] = (1.0 - frac) / w[k]
            dens[k + 1] = frac / w[k + 1]
        else:
            raise ValueError(f"unknown law {law.law!r}")
        mass = float(dens @ w)
        if mass > 0:
            vals[j] = wt * dens / mass
    field = DensityField(grid, vals)
    field.renormalize()
    return field


def field_from_spec(spec: EnsembleSpec, grid: Optional[np.ndarray] = None,
                    m: int = 512) -> DensityField:
    if grid is None:
        grid = energy_grid(spec.rates.bath_beta, spec.chem_energies(), m=m)
    dist = spec.initial_distribution
    return field_from_laws(grid, dist.type_weights, dist.energy_laws)


# -- deposition kernels ----------------------------------------------------------


def _beta_partial_moments(u_lo, u_hi):
    """(mass, first moment) of Beta(3/2,3/2) between clipped fractions."""
    m0 = betainc(1.5, 1.5, u_hi) - betainc(1.5, 1.5, u_lo)
    m1 = 0.5 * (betainc(2.5, 1.5, u_hi) - betainc(2.5, 1.5, u_lo))
    return m0, m1


def beta_split_deposition(totals: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Row-stochastic deposition of a Beta(3/2,3/2) split onto hat functions.

    Row s gives the expected nodal weights of an energy drawn as totals[s]*X,
    X ~ Beta(3/2,3/2); any mass beyond the last node is folded into it.
    """
    totals = np.asarray(totals, dtype=float)
    M = grid.size - 1
    h = grid[1] - grid[0]
    D = np.zeros((totals.size, M + 1))
    pos = totals > 0.0
    S = totals[pos][:, None]
    lo = (grid - h)[None, :]
    mid = grid[None, :]
    hi = (grid + h)[None, :]

    def clipped(bound):
        return np.clip(bound / S, 0.0, 1.0)

    # ascending wing on [T_{m-1}, T_m], weight (y - lo)/h
    m0, m1 = _beta_partial_moments(clipped(lo), clipped(mid))
    left = (S * m1 - lo * m0) / h
    # descending wing on [T_m, T_{m+1}], weight (hi - y)/h
    m0, m1 = _beta_partial_moments(clipped(mid), clipped(hi))
    right = (hi * m0 - S * m1) / h
    block = left + right
    # last node: ascending wing plus the whole overflow tail beyond T_M
    tail = 1.0 - betainc(1.5, 1.5, np.clip(grid[M] / S[:, 0], 0.0, 1.0))
    block[:, M] = left[:, M] + tail
    D[pos] = block
    D[~pos, 0] = 1.0
    D /= D.sum(axis=1, keepdims=True)
    return D


def shift_deposition(grid: np.ndarray, delta: float):
    """Index/fraction arrays scattering node masses to node energy + delta."""
    M = grid.size - 1
    h = grid[1] - grid[0]
    target = grid + delta
    idx = np.clip(np.floor(target / h).astype(int), 0, M - 1)
    frac = np.clip(target / h - idx, 0.0, 1.0)
    over = target >= grid[M]
    idx[over] = M - 1
    frac[over] = 1.0
    under = target < 0.0
    idx[under] = 0
    frac[under] = 0.0
    return idx, frac


def _scatter(gains: np.ndarray, idx: np.ndarray, frac: np.ndarray,
             mass: np.ndarray) -> None:
    np.add.at(gains, idx, mass * (1.0 - frac))
    np.add.at(gains, idx + 1, mass * frac)


def heat_deposition(grid: np.ndarray, beta: float, n_quad: int = 96) -> np.ndarray:
    """Row-stochastic matrix H[k, m]: bath contact moves unit mass at node k
    to nodes m, averaging the Beta split of T_k + xi over xi ~ Gamma(3/2, beta)."""
    xi_max = 40.0 / beta
    x, wq = np.polynomial.legendre.leggauss(n_quad)
    xi = 0.5 * xi_max * (x + 1.0)
    wq = 0.5 * xi_max * wq * gamma32_density(xi, beta)
    wq /= wq.sum()
    M = grid.size - 1
    H = np.empty((M + 1, M + 1))
    for k in range(M + 1):
        D = beta_split_deposition(grid[k] + xi, grid)
        H[k] = wq @ D
    return H


# -- the four-channel integrator --------------------------------------------------


class BoltzmannIntegrator:
    """Conservative RK4 integrator for the discretized kinetic equation.

    Operates on per-type mass vectors rho[j, k] = p(j, T_k) w_k.  Binary gain
    terms are evaluated through the pair-total convolution: conv[s] =
    sum_{k+l=s} rho_j[k] rho_j'[l] collects collisions with total energy s*h,
    and a precomputed row-stochastic matrix redistributes each total through
    the Beta split.
    """

    def __init__(self, spec: EnsembleSpec, grid: np.ndarray, *,
                 enable_slow_binary: bool = False):
        self.spec = spec
        self.grid = np.asarray(grid, dtype=float)
        self.h = float(self.grid[1] - self.grid[0])
        self.weights = _trapezoid_weights(self.grid)
        J = spec.n_types
        M = self.grid.size - 1
        K = spec.chem_energies()
        r = spec.rates

        # unary: rate vectors and shift depositions per ordered (j, j1)
        self.unary_terms = []
        for j in range(J):
            for j1 in range(J):
                if j1 == j:
                    continue
                if r.unary_fn is None:
                    allowed = self.grid + K[j] - K[j1] >= 0.0
                    rate = np.where(allowed, r.unary[j][j1], 0.0)
                else:
                    rate = np.array([r.unary_fn(j + 1, j1 + 1, float(T))
                                     if T + K[j] - K[j1] >= 0.0 else 0.0
                                     for T in self.grid])
                if not rate.any():
                    continue
                idx, frac = shift_deposition(self.grid, K[j] - K[j1])
                self.unary_terms.append((j, j1, rate, idx, frac))

        # fast channel
        self.f_eff = spec.scale_fast * np.array(r.fast_binary, dtype=float) \
            if J else np.zeros((0, 0))
        self.has_fast = bool(J) and float(np.max(self.f_eff, initial=0.0)) > 0.0
        pair_totals = np.arange(2 * M + 1) * self.h
        if self.has_fast:
            self.split_D = beta_split_deposition(pair_totals, self.grid)

        # heat channel
        self.heat_eff = spec.scale_heat * r.heat_rate
        if self.heat_eff > 0.0:
            self.heat_H = heat_deposition(self.grid, r.bath_beta)

        # slow binary channel (constant rates only)
        self.slow_terms = []
        self.has_slow = False
        if enable_slow_binary:
            if r.slow_fn is not None:
                raise ValueError("mean-field slow binary supports constant rates only")
            bmat = np.array(r.slow_binary, dtype=float)
            if float(np.max(bmat, initial=0.0)) > 0.0:
                self.has_slow = True
                kernel = r.binary_kernel
                for j in range(J):
                    for jp in range(J):
                        b = bmat[j, jp]
                        if b == 0.0:
                            continue
                        # engine picks the ordered pair uniformly, so the
                        # effective first-slot kernel is the swap-symmetrized one
                        eff = {}
                        for (a, bb), prob in kernel.outcomes(j + 1, jp + 1):
                            eff[(a - 1, bb - 1)] = eff.get((a - 1, bb - 1), 0.0) + 0.5 * prob
                        for (a, bb), prob in kernel.outcomes(jp + 1, j + 1):
                            eff[(bb - 1, a - 1)] = eff.get((bb - 1, a - 1), 0.0) + 0.5 * prob
                        for (j1, j1p), prob in eff.items():
                            dK = (K[j] + K[jp]) - (K[j1] + K[j1p])
                            totals = pair_totals + dK
                            ok = totals >= 0.0
                            D = np.zeros((totals.size, M + 1))
                            if ok.any():
                                D[ok] = beta_split_deposition(totals[ok], self.grid)
                            # smallest pair-total index with E >= 0
                            s_min = int(np.argmax(ok)) if ok.any() else totals.size
                            self.slow_terms.append(
                                (j, jp, j1, j1p, 2.0 * b * prob, D, s_min, ok))

    # -- right-hand side ---------------------------------------------------------

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        J, n_nodes = rho.shape
        out = np.zeros_like(rho)
        type_mass = rho.sum(axis=1)

        for j, j1, rate, idx, frac in self.unary_terms:
            flux = rate * rho[j]
            out[j] -= flux
            _scatter(out[j1], idx, frac, flux)

        if self.has_fast:
            for j in range(J):
                loss_rate = 2.0 * float(self.f_eff[j] @ type_mass)
                if loss_rate:
                    out[j] -= loss_rate * rho[j]
                for jp in range(J):
                    f = self.f_eff[j, jp]
                    if f == 0.0:
                        continue
                    conv = np.convolve(rho[j], rho[jp])
                    out[j] += 2.0 * f * (conv @ self.split_D)

        if self.heat_eff > 0.0:
            for j in range(J):
                out[j] += self.heat_eff * (rho[j] @ self.heat_H - rho[j])

        if self.has_slow:
            for j, jp, j1, j1p, coef, D, s_min, ok in self.slow_terms:
                # loss: node k of type j reacts only with partners l where
                # the pair total clears the chemical-energy deficit
                suffix = np.concatenate((np.cumsum(rho[jp][::-1])[::-1], [0.0]))
                l_min = np.clip(s_min - np.arange(n_nodes), 0, n_nodes)
                out[j] -= coef * rho[j] * suffix[l_min]
                conv = np.convolve(rho[j], rho[jp])
                out[j1] += coef * (np.where(ok, conv, 0.0) @ D)

        return out

    def max_out_rate(self, rho: np.ndarray) -> float:
        """Largest total per-node outflow rate, for the step-size bound."""
        type_mass = rho.sum(axis=1)
        J = rho.shape[0]
        worst = 0.0
        for j in range(J):
            r = np.zeros(self.grid.size)
            for jj, j1, rate, idx, frac in self.unary_terms:
                if jj == j:
                    r += rate
            if self.has_fast:
                r += 2.0 * float(self.f_eff[j] @ type_mass)
            if self.heat_eff > 0.0:
                r += self.heat_eff
            if self.has_slow:
                for jj, jp, j1, j1p, coef, D, s_min, ok in self.slow_terms:
                    if jj == j:
                        r += coef * rho[jp].sum()
            worst = max(worst, float(r.max()))
        return worst

    def step(self, rho: np.ndarray, dt: float) -> np.ndarray:
        k1 = self.rhs(rho)
        k2 = self.rhs(rho + 0.5 * dt * k1)
        k3 = self.rhs(rho + 0.5 * dt * k2)
        k4 = self.rhs(rho + dt * k3)
        return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class MeanFieldTrajectory:
    times: np.ndarray
    fields: list                 # DensityField snapshots at sample times
    max_step_drift: float        # largest pre-renormalization mass drift

    def concentrations(self, c_total: float = 1.0) -> np.ndarray:
        return np.array([f.concentrations(c_total) for f in self.fields])

    def final(self) -> DensityField:
        return self.fields[-1]


def integrate_boltzmann(field: DensityField, spec: EnsembleSpec, t_end: float,
                        dt: Optional[float] = None, *,
                        sample_every: Optional[float] = None,
                        enable_slow_binary: bool = False) -> MeanFieldTrajectory:
    """March the density field to t_end with fixed-step RK4.

    The step must satisfy dt * (max total outflow rate) <= 0.5; a violating
    request raises ValueError.  The field is renormalized after every step and
    the worst pre-renormalization drift is reported on the trajectory.
    """
    integ = BoltzmannIntegrator(spec, field.grid, enable_slow_binary=enable_slow_binary)
    w = integ.weights
    rho = field.values * w
    rho /= rho.sum()
    rate = integ.max_out_rate(rho)
    if dt is None:
        dt = 0.4 / rate if rate > 0.0 else t_end or 1.0
    if rate * dt > 0.5:
        raise ValueError(
            f"step size violates stability bound: dt*rate = {rate * dt:.3g} > 0.5")

    def snap(t):
        f = DensityField(field.grid, rho / w)
        times.append(t)
        fields.append(f)

    times: list = []
    fields: list = []
    next_sample = sample_every
    snap(0.0)
    t = 0.0
    drift = 0.0
    n_steps = max(1, math.ceil(t_end / dt)) if t_end > 0 else 0
    dt_actual = t_end / n_steps if n_steps else 0.0
    for k in range(n_steps):
        rho = integ.step(rho, dt_actual)
        np.clip(rho, 0.0, None, out=rho)
        total = rho.sum()
        drift = max(drift, abs(total - 1.0))
        rho /= total
        t = (k + 1) * dt_actual
        if next_sample is not None and t + 1e-12 >= next_sample:
            snap(t)
            next_sample += sample_every
        rate = integ.max_out_rate(rho)
        if rate * dt_actual > 0.5:
            raise ValueError(
                f"step size violates stability bound at t={t:.3g}: "
                f"dt*rate = {rate * dt_actual:.3g} > 0.5")
    if not times or times[-1] != t_end:
        snap(t_end)
    return MeanFieldTrajectory(np.asarray(times), fields, drift)
