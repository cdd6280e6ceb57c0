import math

import numpy as np
import pytest
from scipy import integrate as sintegrate

from kinchem import meanfield as MF
from kinchem.model import EnergyLaw, RateTable
from conftest import make_two_state


# -- survival function --------------------------------------------------------------


def test_survival_trivial_values():
    assert MF.survival_gbeta(0.0, 1.0) == 1.0
    rs = np.linspace(0.0, 20.0, 50)
    vals = [MF.survival_gbeta(r, 0.7) for r in rs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3


def test_survival_matches_quadrature_oracle():
    # integral of the normalized density c sqrt(x) exp(-beta x) over (r, inf)
    for beta, r in [(1.0, 1.0), (0.5, 2.3), (3.0, 0.2)]:
        c = 2.0 * beta ** 1.5 / math.sqrt(math.pi)
        val, err = sintegrate.quad(
            lambda x: c * math.sqrt(x) * math.exp(-beta * x), r, np.inf)
        assert abs(MF.survival_gbeta(r, beta) - val) < 1e-10


def test_survival_rejects_bad_arguments():
    with pytest.raises(ValueError):
        MF.survival_gbeta(-0.1, 1.0)
    with pytest.raises(ValueError):
        MF.survival_gbeta(1.0, 0.0)


# -- reduced chain -------------------------------------------------------------------


def test_reduced_two_state_no_threshold():
    spec = make_two_state(k2=0.0, w12=0.7, w21=0.3)
    v12, v21 = MF.reduced_two_state(spec)
    assert v12 == 0.7 and v21 == 0.3


def test_reduced_two_state_threshold_value():
    spec = make_two_state(k2=1.0, w12=1.0, w21=1.0)
    v12, v21 = MF.reduced_two_state(spec)
    assert v21 == 1.0
    c = 2.0 / math.sqrt(math.pi)
    oracle, _ = sintegrate.quad(lambda x: c * math.sqrt(x) * math.exp(-x),
                                1.0, np.inf)
    assert abs(v12 - oracle) < 1e-10


def test_reduced_two_state_absorbing():
    spec = make_two_state(w12=0.0, w21=1.0)
    v12, v21 = MF.reduced_two_state(spec)
    assert v12 == 0.0


def test_reduced_two_state_requires_two_species():
    spec = make_two_state()
    three = spec.species + (spec.species[1].__class__(3, 1.0, 3, 2.0),)
    with pytest.raises(ValueError):
        MF.reduced_two_state(spec.with_overrides(
            species=three,
            rates=RateTable(unary=np.zeros((3, 3)), slow_binary=np.zeros((3, 3)),
                            fast_binary=np.zeros((3, 3)), heat_rate=0.0,
                            bath_beta=1.0)))


def test_reduced_ode_fixed_point_is_constant():
    spec = make_two_state(k2=1.0)
    v12, v21 = MF.reduced_two_state(spec)
    ratio = v21 / v12
    c1 = ratio / (1.0 + ratio)
    traj = MF.reduced_macro_ode(MF.MacroState(1.0, (c1, 1.0 - c1)), spec, 5.0)
    assert np.max(np.abs(traj.concentrations - traj.concentrations[0])) < 1e-12


def test_reduced_ode_converges_to_rate_ratio():
    spec = make_two_state(k2=1.0)
    v12, v21 = MF.reduced_two_state(spec)
    traj = MF.reduced_macro_ode(MF.MacroState(1.0, (0.9, 0.1)), spec, 40.0)
    c1, c2 = traj.concentrations[-1]
    assert abs(c1 / c2 - v21 / v12) < 1e-9


def test_reduced_ode_conserves_total():
    spec = make_two_state(k2=1.0)
    traj = MF.reduced_macro_ode(MF.MacroState(1.0, (0.3, 1.7)), spec, 20.0)
    totals = traj.concentrations.sum(axis=1)
    assert np.max(np.abs(totals - 2.0)) < 1e-12


# -- affinity flux --------------------------------------------------------------------


def test_onsager_flux_zero_at_equilibrium():
    assert MF.onsager_flux(0.0, 0.6, 1.1, 2.0) == 0.0


def test_onsager_flux_sign_and_saturation():
    for A in (0.01, 0.5, 3.0, 1e4):
        assert MF.onsager_flux(A, 0.6, 1.1, 1.0) > 0.0
        assert MF.onsager_flux(-A, 0.6, 1.1, 1.0) < 0.0
    assert abs(MF.onsager_flux(1e6, 0.6, 1.1, 1.0) - 1.1) < 1e-9
    assert abs(MF.onsager_flux(-1e6, 0.6, 1.1, 1.0) + 0.6) < 1e-9


def test_onsager_linear_response():
    u12, u21, beta = 0.6, 1.1, 1.3
    L = beta / (1.0 / u21 + 1.0 / u12)
    h = 1e-6
    fd = (MF.onsager_flux(h, u12, u21, beta) -
          MF.onsager_flux(-h, u12, u21, beta)) / (2 * h)
    assert abs(fd - L) < 1e-6 * L


def test_onsager_rejects_nonpositive_rates():
    with pytest.raises(ValueError):
        MF.onsager_flux(1.0, 0.0, 1.0, 1.0)


# -- kinetic-equation integrator ---------------------------------------------------------


def test_zero_rates_keep_field_constant():
    spec = make_two_state(w12=0.0, w21=0.0, fast=0.0)
    grid = MF.energy_grid(1.0, (0.0, 1.0), m=64, t_max=12.0)
    field = MF.field_from_spec(spec, grid)
    before = field.values.copy()
    traj = MF.integrate_boltzmann(field, spec, t_end=2.0, dt=0.1)
    assert np.allclose(traj.final().values, before, atol=1e-14)


def test_cfl_violation_rejected():
    spec = make_two_state(fast=1.0, scale_fast=10.0)
    grid = MF.energy_grid(1.0, (0.0, 1.0), m=64, t_max=12.0)
    field = MF.field_from_spec(spec, grid)
    with pytest.raises(ValueError, match="stability"):
        MF.integrate_boltzmann(field, spec, t_end=1.0, dt=1.0)


def test_gamma_stationarity_residual_halves_under_refinement():
    spec = make_two_state(w12=0.0, w21=0.0, fast=1.0)
    residuals = []
    for m in (64, 128, 256):
        grid = MF.energy_grid(1.0, (0.0, 1.0), m=m, t_max=15.0)
        field = MF.field_from_laws(grid, (0.5, 0.5),
                                   (EnergyLaw("gamma", beta=1.0),) * 2)
        integ = MF.BoltzmannIntegrator(spec, grid)
        rho = field.values * integ.weights
        rho /= rho.sum()
        residuals.append(float(np.abs(integ.rhs(rho)).sum()))
    assert residuals[1] < 0.7 * residuals[0]
    assert residuals[2] < 0.7 * residuals[1]


def test_fast_only_relaxes_to_equilibrium_shape():
    spec = make_two_state(w12=0.0, w21=0.0, fast=1.0, weights=(1.0, 0.0))
    grid = MF.energy_grid(1.0, (0.0,), m=256, t_max=15.0)
    field = MF.field_from_laws(grid, (1.0, 0.0),
                               (EnergyLaw("uniform", low=0.0, high=2.0),) * 2)
    traj = MF.integrate_boltzmann(field, spec, t_end=25.0)
    final = traj.final()
    beta_imp = 1.5 / final.mean_energy()
    target = MF.gamma32_density(grid, beta_imp)
    l1 = float(np.abs(final.marginal(1) - target) @ final.weights())
    assert l1 < 0.01
    assert traj.max_step_drift < 1e-6


def test_heat_operator_fixes_bath_law():
    spec = make_two_state(w12=0.0, w21=0.0, fast=0.0, heat=1.0, scale_heat=1.0)
    grid = MF.energy_grid(1.0, (0.0, 1.0), m=256, t_max=15.0)
    field = MF.field_from_laws(grid, (1.0, 0.0),
                               (EnergyLaw("gamma", beta=1.0),) * 2)
    integ = MF.BoltzmannIntegrator(spec, grid)
    rho = field.values * integ.weights
    rho /= rho.sum()
    assert float(np.abs(integ.rhs(rho)).sum()) < 0.02


def test_unary_channel_matches_reduced_chain_after_projection():
    spec = make_two_state(k2=1.0, fast=1.0, heat=1.0, scale_fast=25.0,
                          scale_heat=25.0, weights=(0.2, 0.8))
    grid = MF.energy_grid(1.0, (0.0, 1.0), m=128)
    field = MF.field_from_spec(spec, grid)
    traj = MF.integrate_boltzmann(field, spec, t_end=3.0, sample_every=0.5)
    red = MF.reduced_macro_ode(MF.MacroState(1.0, (0.2, 0.8)), spec, 3.0,
                               n_samples=len(traj.times))
    diff = np.max(np.abs(traj.concentrations() - red.concentrations))
    assert diff < 0.03          # manifold lag is O(1/scale)


def test_slow_binary_identity_kernel_equals_fast_operator():
    spec_b = make_two_state(w12=0.0, w21=0.0, fast=0.0, slow=1.0)
    spec_f = make_two_state(w12=0.0, w21=0.0, fast=1.0)
    grid = MF.energy_grid(1.0, (0.0, 1.0), m=96, t_max=12.0)
    rng = np.random.default_rng(0)
    field = MF.DensityField(grid, rng.random((2, grid.size)))
    field.renormalize()
    ib = MF.BoltzmannIntegrator(spec_b, grid, enable_slow_binary=True)
    iff = MF.BoltzmannIntegrator(spec_f, grid)
    rho = field.values * ib.weights
    assert np.max(np.abs(ib.rhs(rho) - iff.rhs(rho))) < 1e-14


def test_slow_binary_respects_energy_threshold():
    # reactive kernel (1,1)->(2,2) with large K2: below threshold nothing moves
    from kinchem.model import TypeKernel
    kernel = TypeKernel(kind="table", table=(((1, 1), (((2, 2), 1.0),)),))
    spec = make_two_state(w12=0.0, w21=0.0, fast=0.0, slow=1.0, k2=40.0,
                          kernel=kernel, weights=(1.0, 0.0))
    grid = MF.energy_grid(1.0, (0.0,), m=96, t_max=12.0)
    field = MF.field_from_laws(grid, (1.0, 0.0),
                               (EnergyLaw("gamma", beta=1.0),) * 2)
    integ = MF.BoltzmannIntegrator(spec, grid, enable_slow_binary=True)
    rho = field.values * integ.weights
    assert np.max(np.abs(integ.rhs(rho))) == 0.0


def test_observables_converge_under_grid_doubling():
    spec = make_two_state(k2=1.0, fast=1.0, heat=1.0, scale_fast=10.0,
                          scale_heat=10.0, weights=(0.3, 0.7))
    cs = []
    for m in (128, 256):
        grid = MF.energy_grid(1.0, (0.0, 1.0), m=m, t_max=15.0)
        field = MF.field_from_spec(spec, grid)
        traj = MF.integrate_boltzmann(field, spec, t_end=2.0)
        cs.append(traj.final().concentrations())
    assert np.max(np.abs(cs[0] - cs[1])) < 0.01 * np.max(cs[1])


def test_point_mass_field_deposits_unit_mass():
    grid = MF.energy_grid(1.0, (0.0,), m=64, t_max=8.0)
    field = MF.field_from_laws(grid, (1.0,), (EnergyLaw("point", value=1.23),))
    assert abs(field.norm() - 1.0) < 1e-12
    assert abs(field.mean_energy() - 1.23) < 0.05


def test_deposition_rows_are_stochastic_and_mean_preserving():
    grid = MF.energy_grid(1.0, (), m=128, t_max=10.0)
    totals = np.linspace(0.0, 20.0, 257)
    D = MF.beta_split_deposition(totals, grid)
    assert np.max(np.abs(D.sum(axis=1) - 1.0)) < 1e-12
    # two-node deposition preserves the split mean S/2 wherever no clipping
    means = D @ grid
    inside = totals <= grid[-1]
    assert np.max(np.abs(means[inside] - totals[inside] / 2.0)) < 1e-8
