"""Material constants and ambient conditions.

All quantities use the micrometre-kilogram-second-volt convention:

=====================  ====================
length                 um
mass                   kg
pressure / stress      MPa  (= uN/um^2)
force                  uN
power                  pW
energy                 pJ
thermal conductivity   pW/(um K)
convection coeff.      pW/(um^2 K)  (numerically equal to W/(m^2 K))
electrical cond.       S/um
temperature            K
=====================  ====================
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

ZERO_CELSIUS = 273.15
AMBIENT_TEMPERATURE = 27.0 + ZERO_CELSIUS
AIR_CONVECTION = 20.0

# bulk gold, 4.10e7 S/m
GOLD_CONDUCTIVITY = 4.10e7 * 1e-6


class MaterialError(KeyError):
    pass


@dataclass(frozen=True)
class MaterialProps:
    name: str
    density: float  # kg/um^3
    youngs_modulus: float  # MPa
    poisson_ratio: float
    tce: float  # 1/K
    thermal_conductivity: float  # pW/(um K)
    specific_heat: float  # pJ/(kg K)
    electrical_conductivity: float | None = None  # S/um

    @property
    def is_conductor(self) -> bool:
        return self.electrical_conductivity is not None

    def lame(self) -> tuple[float, float]:
        """Lame parameters (lambda, mu) in MPa."""
        e, nu = self.youngs_modulus, self.poisson_ratio
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = e / (2.0 * (1.0 + nu))
        return lam, mu

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> MaterialProps:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown material field(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_overrides(self, **changes) -> MaterialProps:
        return replace(self, **changes)


@dataclass(frozen=True)
class Environment:
    ambient_temperature: float = AMBIENT_TEMPERATURE  # K
    convection_coefficient: float = AIR_CONVECTION  # pW/(um^2 K)

    def validate(self) -> list[str]:
        problems = []
        if not self.convection_coefficient >= 0.0:
            problems.append("convection_coefficient must be >= 0")
        if not self.ambient_temperature > 0.0:
            problems.append("ambient_temperature must be > 0 K")
        return problems


# Table of measured constants for the three materials of the device.
_BUILTIN = {
    "SU-8": dict(
        density=1.2e-15,
        youngs_modulus=4.95e3,
        poisson_ratio=0.22,
        tce=5.2e-5,
        thermal_conductivity=2e5,
        specific_heat=1.675e15,
    ),
    "SiO2": dict(
        density=2.15e-15,
        youngs_modulus=70e3,
        poisson_ratio=0.17,
        tce=0.05e-5,
        thermal_conductivity=14e5,
        specific_heat=1e15,
    ),
    "Gold": dict(
        density=19.3e-15,
        youngs_modulus=57e3,
        poisson_ratio=0.35,
        tce=1.41e-5,
        thermal_conductivity=2970e5,
        specific_heat=0.129e15,
        electrical_conductivity=GOLD_CONDUCTIVITY,
    ),
}

BUILTIN_NAMES = tuple(_BUILTIN)


def builtin_material(name: str) -> MaterialProps:
    """Return one of the built-in materials (``SU-8``, ``SiO2``, ``Gold``)."""
    try:
        values = _BUILTIN[name]
    except KeyError:
        raise MaterialError(
            f"unknown material {name!r}; known: {', '.join(BUILTIN_NAMES)}"
        ) from None
    return MaterialProps(name=name, **values)


def builtin_library() -> dict[str, MaterialProps]:
    return {name: builtin_material(name) for name in BUILTIN_NAMES}


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_material(props: MaterialProps) -> list[str]:
    """List every violated invariant; an empty list means the material is usable."""
    report = []
    for attr in ("density", "youngs_modulus", "thermal_conductivity", "specific_heat"):
        value = getattr(props, attr)
        if not (_finite(value) and value > 0):
            report.append(f"{attr} must be > 0 (got {value!r})")
    nu = props.poisson_ratio
    if not _finite(nu):
        report.append(f"poisson_ratio must be finite (got {nu!r})")
    elif nu < 0:
        report.append("poisson_ratio must be >= 0")
    elif nu >= 0.5:
        report.append("poisson_ratio must be < 0.5")
    if not (_finite(props.tce) and props.tce >= 0):
        report.append(f"tce must be >= 0 (got {props.tce!r})")
    sigma = props.electrical_conductivity
    if sigma is not None and not (_finite(sigma) and sigma > 0):
        report.append(f"electrical_conductivity must be > 0 when present (got {sigma!r})")
    return report
