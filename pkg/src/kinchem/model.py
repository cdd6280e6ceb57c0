"""Model configuration: species constants, rate tables, ensemble setup.

All objects here are plain immutable data, validated once and then shared
read-only by the particle and mean-field engines.  Units follow k_B = 1:
inverse temperature beta and every energy (kinetic T, chemical K_j) share
one unit, lengths are arbitrary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import yaml

__all__ = [
    "SpeciesSpec",
    "EnergyLaw",
    "InitialDistribution",
    "TypeKernel",
    "RateTable",
    "EnsembleSpec",
    "ParticleState",
    "Violation",
    "ValidationReport",
    "ConfigError",
    "validate_spec",
    "load_config",
    "save_config",
    "spec_to_dict",
    "spec_from_dict",
]


def _matrix(rows) -> tuple:
    return tuple(tuple(float(x) for x in row) for row in rows)


@dataclass(frozen=True)
class SpeciesSpec:
    """Per-type constants: mass m_j, degrees of freedom d_j, chemical energy K_j.

    ``dof`` counts all degrees of freedom; the first three are translational,
    the remaining ``dof - 3`` are internal oscillators with the given masses.
    The simulator carries no internal coordinates, they enter only through
    the thermodynamic functions.
    """

    type_id: int
    mass: float
    dof: int = 3
    chem_energy: float = 0.0
    internal_masses: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "internal_masses",
                           tuple(float(m) for m in self.internal_masses))


@dataclass(frozen=True)
class EnergyLaw:
    """Per-type initial kinetic-energy law: uniform(low, high), gamma(3/2, beta), or point(value)."""

    law: str
    low: float = 0.0
    high: float = 1.0
    beta: float = 1.0
    value: float = 0.0

    def sample(self, rng) -> float:
        if self.law == "uniform":
            return rng.uniform(self.low, self.high)
        if self.law == "gamma":
            return rng.gammavariate(1.5, 1.0 / self.beta)
        if self.law == "point":
            return self.value
        raise ValueError(f"unknown energy law {self.law!r}")

    def to_dict(self) -> dict:
        if self.law == "uniform":
            return {"law": "uniform", "low": self.low, "high": self.high}
        if self.law == "gamma":
            return {"law": "gamma", "beta": self.beta}
        return {"law": "point", "value": self.value}

    @staticmethod
    def from_dict(d: dict) -> "EnergyLaw":
        return EnergyLaw(**d)


@dataclass(frozen=True)
class InitialDistribution:
    """Type weights (summing to one) plus one kinetic-energy law per type."""

    type_weights: tuple
    energy_laws: tuple

    def __post_init__(self):
        object.__setattr__(self, "type_weights",
                           tuple(float(w) for w in self.type_weights))
        object.__setattr__(self, "energy_laws", tuple(self.energy_laws))


@dataclass(frozen=True)
class TypeKernel:
    """Type-transition kernel for slow binary reactions.

    ``identity`` keeps both types unchanged.  A ``table`` kernel maps an
    ordered type pair (j, j') to a distribution over outcome pairs; entries
    are ((j, j'), (((j1, j1p), prob), ...)) with 1-based type ids.  Pairs
    absent from the table fall back to the identity outcome.
    """

    kind: str = "identity"
    table: tuple = ()

    def outcomes(self, j: int, jp: int) -> tuple:
        """Outcome distribution for an ordered (1-based) type pair."""
        if self.kind == "identity":
            return (((j, jp), 1.0),)
        for (a, b), outs in self.table:
            if (a, b) == (j, jp):
                return outs
        return (((j, jp), 1.0),)

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        entries = {}
        for (a, b), outs in self.table:
            entries[f"{a},{b}"] = [[j1, j1p, p] for (j1, j1p), p in outs]
        return {"kind": "table", "entries": entries}

    @staticmethod
    def from_dict(d: dict) -> "TypeKernel":
        kind = d.get("kind", "identity")
        if kind == "identity":
            return TypeKernel()
        table = []
        for key, outs in d.get("entries", {}).items():
            a, b = (int(s) for s in key.split(","))
            table.append(((a, b), tuple(((int(j1), int(j1p)), float(p))
                                        for j1, j1p, p in outs)))
        return TypeKernel(kind="table", table=tuple(table))


@dataclass(frozen=True)
class RateTable:
    """Reaction rates shared by all engines.

    ``unary`` holds the threshold-family base rates w_jj': the effective rate
    is w_jj' when T + K_j - K_j' >= 0 and zero otherwise.  A general bounded
    rate function can be plugged in through ``unary_fn`` (signature
    ``(j, j1, T) -> rate`` with 1-based ids) together with its supremum table
    ``unary_sup`` used for thinning; plug-ins are not serialized to config
    files.  ``slow_binary`` holds the bounds b̄_jj' (also the constant rates
    when ``slow_fn`` is absent), ``fast_binary`` the constants f_jj'.
    """

    unary: tuple
    slow_binary: tuple
    fast_binary: tuple
    heat_rate: float
    bath_beta: float
    binary_kernel: TypeKernel = TypeKernel()
    unary_fn: Optional[Callable] = field(default=None, compare=False)
    unary_sup: Optional[tuple] = None
    slow_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "unary", _matrix(self.unary))
        object.__setattr__(self, "slow_binary", _matrix(self.slow_binary))
        object.__setattr__(self, "fast_binary", _matrix(self.fast_binary))
        if self.unary_sup is not None:
            object.__setattr__(self, "unary_sup", _matrix(self.unary_sup))

    def unary_bounds(self) -> tuple:
        """Per-transition rate suprema used by the thinning proposal."""
        return self.unary_sup if self.unary_sup is not None else self.unary


@dataclass(frozen=True)
class EnsembleSpec:
    """Full configuration of one finite-N ensemble on the periodic box."""

    n_particles: int
    box_side: float
    species: tuple
    rates: RateTable
    initial_distribution: InitialDistribution
    scale_fast: float = 1.0
    scale_heat: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))

    @property
    def n_types(self) -> int:
        return len(self.species)

    def chem_energies(self) -> tuple:
        return tuple(sp.chem_energy for sp in self.species)

    def masses(self) -> tuple:
        return tuple(sp.mass for sp in self.species)

    def with_overrides(self, **kw) -> "EnsembleSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class ParticleState:
    """One particle: 1-based type id, kinetic energy, torus position, unit direction.

    Speed is never stored; it derives from the energy as sqrt(2 T / m_j).
    """

    type_id: int
    kinetic_energy: float
    position: tuple
    direction: tuple

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        object.__setattr__(self, "direction", tuple(float(x) for x in self.direction))

    def speed(self, mass: float) -> float:
        return math.sqrt(2.0 * self.kinetic_energy / mass)

    def velocity(self, mass: float) -> tuple:
        s = self.speed(mass)
        return tuple(s * d for d in self.direction)

    def check(self, box_side: float) -> list:
        """Return invariant violations for this particle (empty when valid)."""
        bad = []
        if self.kinetic_energy < 0.0:
            bad.append("kinetic_energy < 0")
        norm = math.sqrt(sum(d * d for d in self.direction))
        if abs(norm - 1.0) > 1e-12:
            bad.append(f"|direction| = {norm!r} not unit")
        if any(not (0.0 <= x < box_side) for x in self.position):
            bad.append("position outside [0, box_side)")
        return bad


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


class ConfigError(ValueError):
    """Raised on malformed or invalid configuration files."""


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_spec(spec: EnsembleSpec) -> ValidationReport:
    """Check every invariant of the configuration; returns all violations found."""
    bad = []

    def flag(fieldname, msg):
        bad.append(Violation(fieldname, msg))

    J = len(spec.species)
    if J == 0:
        flag("species", "at least one species required")
    for pos, sp in enumerate(spec.species, start=1):
        tag = f"species[{pos}]"
        if sp.type_id != pos:
            flag(f"{tag}.type_id", f"expected consecutive id {pos}, got {sp.type_id}")
        if not _finite(sp.mass) or sp.mass <= 0.0:
            flag(f"{tag}.mass", f"must be positive and finite, got {sp.mass!r}")
        if not isinstance(sp.dof, int) or sp.dof < 3:
            flag(f"{tag}.dof", f"must be an integer >= 3, got {sp.dof!r}")
        if not _finite(sp.chem_energy) or sp.chem_energy < 0.0:
            flag(f"{tag}.chem_energy", f"must be finite and >= 0, got {sp.chem_energy!r}")
        if isinstance(sp.dof, int) and sp.dof >= 3 and len(sp.internal_masses) != sp.dof - 3:
            flag(f"{tag}.internal_masses",
                 f"count {len(sp.internal_masses)} != dof - 3 = {sp.dof - 3}")
        if any(m <= 0.0 for m in sp.internal_masses):
            flag(f"{tag}.internal_masses", "all oscillator masses must be positive")

    r = spec.rates

    def check_matrix(name, mat, symmetric):
        if len(mat) != J or any(len(row) != J for row in mat):
            flag(f"rates.{name}", f"must be a {J}x{J} matrix")
            return
        for a in range(J):
            for b in range(J):
                x = mat[a][b]
                if not _finite(x) or x < 0.0:
                    flag(f"rates.{name}[{a + 1}][{b + 1}]",
                         f"must be finite and >= 0, got {x!r}")
        if symmetric:
            for a in range(J):
                for b in range(a + 1, J):
                    if mat[a][b] != mat[b][a]:
                        flag(f"rates.{name}",
                             f"symmetry broken at ({a + 1},{b + 1}): "
                             f"{mat[a][b]!r} != {mat[b][a]!r}")

    check_matrix("unary", r.unary, symmetric=False)
    check_matrix("slow_binary", r.slow_binary, symmetric=True)
    check_matrix("fast_binary", r.fast_binary, symmetric=True)
    if len(r.unary) == J and all(len(row) == J for row in r.unary):
        for a in range(J):
            if r.unary[a][a] != 0.0:
                flag(f"rates.unary[{a + 1}][{a + 1}]", "diagonal entries must be 0")
    if r.unary_fn is not None and r.unary_sup is None:
        flag("rates.unary_sup", "required when a unary rate plug-in is set")
    if r.unary_sup is not None:
        check_matrix("unary_sup", r.unary_sup, symmetric=False)
    if not _finite(r.heat_rate) or r.heat_rate < 0.0:
        flag("rates.heat_rate", f"must be finite and >= 0, got {r.heat_rate!r}")
    if not _finite(r.bath_beta) or r.bath_beta <= 0.0:
        flag("rates.bath_beta", f"must be positive and finite, got {r.bath_beta!r}")
    if r.binary_kernel.kind not in ("identity", "table"):
        flag("rates.binary_kernel.kind", f"unknown kind {r.binary_kernel.kind!r}")
    elif r.binary_kernel.kind == "table":
        for (a, b), outs in r.binary_kernel.table:
            tag = f"rates.binary_kernel[{a},{b}]"
            if not (1 <= a <= J and 1 <= b <= J):
                flag(tag, "type ids out of range")
                continue
            total = 0.0
            for (j1, j1p), p in outs:
                if not (1 <= j1 <= J and 1 <= j1p <= J):
                    flag(tag, f"outcome ({j1},{j1p}) out of range")
                if p < 0.0:
                    flag(tag, f"negative probability {p!r}")
                total += p
            if abs(total - 1.0) > 1e-9:
                flag(tag, f"outcome probabilities sum to {total!r}, expected 1")

    if not isinstance(spec.n_particles, int) or spec.n_particles < 1:
        flag("ensemble.n_particles", f"must be an integer >= 1, got {spec.n_particles!r}")
    if not _finite(spec.box_side) or spec.box_side <= 0.0:
        flag("ensemble.box_side", f"must be positive and finite, got {spec.box_side!r}")
    if not _finite(spec.scale_fast) or spec.scale_fast < 1.0:
        flag("ensemble.scale_fast", f"must be finite and >= 1, got {spec.scale_fast!r}")
    if not _finite(spec.scale_heat) or spec.scale_heat < 0.0:
        flag("ensemble.scale_heat", f"must be finite and >= 0, got {spec.scale_heat!r}")
    if not isinstance(spec.rng_seed, int) or not (0 <= spec.rng_seed < 2 ** 64):
        flag("ensemble.rng_seed", f"must be a 64-bit unsigned integer, got {spec.rng_seed!r}")

    dist = spec.initial_distribution
    if len(dist.type_weights) != J:
        flag("ensemble.initial_distribution.type_weights", f"need {J} weights")
    else:
        if any(w < 0.0 for w in dist.type_weights):
            flag("ensemble.initial_distribution.type_weights", "weights must be >= 0")
        total = math.fsum(dist.type_weights)
        if abs(total - 1.0) > 1e-9:
            flag("ensemble.initial_distribution.type_weights",
                 f"weights sum to {total!r}, expected 1")
    if len(dist.energy_laws) != J:
        flag("ensemble.initial_distribution.energy_laws", f"need {J} laws")
    for pos, law in enumerate(dist.energy_laws, start=1):
        tag = f"ensemble.initial_distribution.energy_laws[{pos}]"
        if law.law not in ("uniform", "gamma", "point"):
            flag(tag, f"unknown law {law.law!r}")
        elif law.law == "uniform" and not (0.0 <= law.low <= law.high):
            flag(tag, f"need 0 <= low <= high, got ({law.low!r}, {law.high!r})")
        elif law.law == "gamma" and law.beta <= 0.0:
            flag(tag, f"gamma law needs beta > 0, got {law.beta!r}")
        elif law.law == "point" and law.value < 0.0:
            flag(tag, f"point law needs value >= 0, got {law.value!r}")

    return ValidationReport(bad)


# -- config file round trip ---------------------------------------------------

def spec_to_dict(spec: EnsembleSpec) -> dict:
    """Plain nested-dict form of a spec, suitable for YAML serialization."""
    return {
        "ensemble": {
            "n_particles": spec.n_particles,
            "box_side": spec.box_side,
            "scale_fast": spec.scale_fast,
            "scale_heat": spec.scale_heat,
            "rng_seed": spec.rng_seed,
            "initial_distribution": {
                "type_weights": list(spec.initial_distribution.type_weights),
                "energy_laws": [law.to_dict() for law in spec.initial_distribution.energy_laws],
            },
        },
        "species": [
            {
                "type_id": sp.type_id,
                "mass": sp.mass,
                "dof": sp.dof,
                "chem_energy": sp.chem_energy,
                **({"internal_masses": list(sp.internal_masses)} if sp.internal_masses else {}),
            }
            for sp in spec.species
        ],
        "rates": {
            "unary": [list(row) for row in spec.rates.unary],
            "slow_binary": [list(row) for row in spec.rates.slow_binary],
            "fast_binary": [list(row) for row in spec.rates.fast_binary],
            "heat_rate": spec.rates.heat_rate,
            "bath_beta": spec.rates.bath_beta,
            "binary_kernel": spec.rates.binary_kernel.to_dict(),
        },
    }


def _require(d: dict, key: str, section: str):
    if key not in d:
        raise ConfigError(f"missing field {key!r} in section {section!r}")
    return d[key]


def spec_from_dict(data: dict) -> EnsembleSpec:
    """Build a spec from a nested dict, naming any missing field."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    ens = _require(data, "ensemble", "<root>")
    species_raw = _require(data, "species", "<root>")
    rates_raw = _require(data, "rates", "<root>")

    species = []
    for i, sd in enumerate(species_raw, start=1):
        species.append(SpeciesSpec(
            type_id=int(_require(sd, "type_id", f"species[{i}]")),
            mass=float(_require(sd, "mass", f"species[{i}]")),
            dof=int(sd.get("dof", 3)),
            chem_energy=float(sd.get("chem_energy", 0.0)),
            internal_masses=tuple(sd.get("internal_masses", ())),
        ))

    rates = RateTable(
        unary=_require(rates_raw, "unary", "rates"),
        slow_binary=_require(rates_raw, "slow_binary", "rates"),
        fast_binary=_require(rates_raw, "fast_binary", "rates"),
        heat_rate=float(_require(rates_raw, "heat_rate", "rates")),
        bath_beta=float(_require(rates_raw, "bath_beta", "rates")),
        binary_kernel=TypeKernel.from_dict(rates_raw.get("binary_kernel", {"kind": "identity"})),
    )

    dist_raw = _require(ens, "initial_distribution", "ensemble")
    dist = InitialDistribution(
        type_weights=tuple(_require(dist_raw, "type_weights", "initial_distribution")),
        energy_laws=tuple(EnergyLaw.from_dict(d)
                          for d in _require(dist_raw, "energy_laws", "initial_distribution")),
    )

    return EnsembleSpec(
        n_particles=int(_require(ens, "n_particles", "ensemble")),
        box_side=float(_require(ens, "box_side", "ensemble")),
        species=tuple(species),
        rates=rates,
        initial_distribution=dist,
        scale_fast=float(ens.get("scale_fast", 1.0)),
        scale_heat=float(ens.get("scale_heat", 0.0)),
        rng_seed=int(ens.get("rng_seed", 0)),
    )


def load_config(path) -> EnsembleSpec:
    """Load and validate a YAML config; raises ConfigError with context on failure."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    try:
        spec = spec_from_dict(data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    report = validate_spec(spec)
    if not report.ok:
        raise ConfigError(f"invalid config {path}:\n{report}")
    return spec


def save_config(spec: EnsembleSpec, path) -> None:
    """Write the spec as YAML; load_config(save_config(s)) == s for valid specs."""
    with open(path, "w") as fh:
        yaml.safe_dump(spec_to_dict(spec), fh, sort_keys=False)
