"""Closed-form reference models for checking the finite-element solvers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize


class OracleDomainError(ValueError):
    pass


@dataclass(frozen=True)
class FinParams:
    """Straight rod losing heat through its lateral surface.

    ``x = 0`` is the base.  ``base_temperature`` defaults to ambient.  The far
    end is either convective (same ``h`` over the end face) or insulated.
    """

    length: float
    cross_section_area: float
    perimeter: float
    conductivity: float
    convection: float
    ambient: float = 300.15
    heat_density: float = 0.0  # pW/um^3
    base_temperature: float | None = None
    tip: str = "convective"  # or "insulated"

    def validate(self):
        bad = [n for n in ("length", "cross_section_area", "perimeter", "conductivity", "convection", "ambient")
               if not getattr(self, n) > 0]
        if not self.heat_density >= 0:
            bad.append("heat_density")
        if self.tip not in ("convective", "insulated"):
            bad.append("tip")
        if bad:
            raise OracleDomainError(f"invalid fin parameters: {', '.join(bad)}")

    @property
    def m(self) -> float:
        return math.sqrt(self.convection * self.perimeter / (self.conductivity * self.cross_section_area))

    @property
    def plateau(self) -> float:
        """Temperature rise far from both ends, q A / (h P)."""
        return self.heat_density * self.cross_section_area / (self.convection * self.perimeter)


def _fin_coefficients(p: FinParams):
    """``theta(x) = tp + a exp(-m x) + b exp(-m (L - x))``; both exponentials stay bounded for long rods."""
    m, L = p.m, p.length
    base = p.ambient if p.base_temperature is None else p.base_temperature
    tp = p.plateau
    c0 = base - p.ambient - tp
    e = math.exp(-m * L)
    if p.tip == "insulated":
        b = c0 * e / (1.0 + e * e)
    else:
        # -k theta'(L) = h theta(L)
        beta = p.convection / (p.conductivity * m)
        b = (c0 * e * (1.0 - beta) - beta * tp) / (e * e * (1.0 - beta) + 1.0 + beta)
    a = c0 - b * e
    return tp, a, b


def fin_temperature(p: FinParams, x):
    """Steady temperature of the rod at ``x`` (scalar or array)."""
    p.validate()
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > p.length) or not np.all(np.isfinite(xa)):
        raise OracleDomainError(f"x must lie in [0, {p.length}]")
    tp, a, b = _fin_coefficients(p)
    m = p.m
    t = p.ambient + tp + a * np.exp(-m * xa) + b * np.exp(-m * (p.length - xa))
    return float(t) if np.ndim(x) == 0 else t


def fin_max_temperature(p: FinParams) -> tuple[float, float]:
    """(x, T) of the hottest point along the rod."""
    xs = np.linspace(0.0, p.length, 2001)
    ts = fin_temperature(p, xs)
    i = int(np.argmax(ts))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = optimize.minimize_scalar(lambda s: -fin_temperature(p, s), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10 * p.length})
    if -res.fun >= ts[i]:
        return float(res.x), float(-res.fun)
    return float(xs[i]), float(ts[i])


def fin_residual(p: FinParams, x: float, step: float | None = None) -> float:
    """Relative residual of k A T'' - h P (T - T_amb) + q A at ``x``.

    T'' comes from central differences at ``step`` and ``2 step`` combined by
    Richardson extrapolation, so the check does not reuse the closed form's derivatives.
    """
    if step is None:
        step = min(0.05 / p.m, 0.25 * min(x, p.length - x))
    t0 = fin_temperature(p, x)

    def d2(s):
        return (fin_temperature(p, x + s) - 2 * t0 + fin_temperature(p, x - s)) / s ** 2

    curv = (4 * d2(step) - d2(2 * step)) / 3
    a, per, k, h = p.cross_section_area, p.perimeter, p.conductivity, p.convection
    terms = (k * a * curv, h * per * (t0 - p.ambient), p.heat_density * a)
    scale = max(abs(v) for v in terms) or 1.0
    return abs(terms[0] - terms[1] + terms[2]) / scale


@dataclass(frozen=True)
class BimorphLayer:
    youngs_modulus: float
    tce: float
    thickness: float
    poisson_ratio: float = 0.0


@dataclass(frozen=True)
class BimorphParams:
    """Two bonded layers, ``bottom`` then ``top``, heated uniformly by ``delta_t``."""

    bottom: BimorphLayer
    top: BimorphLayer
    width: float
    length: float
    delta_t: float
    plane_strain: bool = False

    def validate(self):
        for name, layer in (("bottom", self.bottom), ("top", self.top)):
            if not (layer.thickness > 0 and layer.youngs_modulus > 0):
                raise OracleDomainError(f"{name} layer needs positive thickness and modulus")
        if not (self.width > 0 and self.length > 0):
            raise OracleDomainError("width and length must be positive")
        if self.length < 10 * (self.bottom.thickness + self.top.thickness):
            warnings.warn("bimorph slenderness below 10: beam theory is inaccurate", stacklevel=3)

    def effective(self, layer: BimorphLayer) -> tuple[float, float]:
        """(modulus, tce) seen by the beam; plane strain stiffens and raises expansion."""
        if self.plane_strain:
            nu = layer.poisson_ratio
            return layer.youngs_modulus / (1 - nu * nu), (1 + nu) * layer.tce
        return layer.youngs_modulus, layer.tce


def bimorph_tip_deflection(p: BimorphParams) -> tuple[float, float]:
    """Timoshenko bimetal-strip curvature and cantilever tip deflection.

    Positive curvature bends the strip upward (the bottom layer expands more).
    """
    p.validate()
    e1, a1 = p.effective(p.bottom)
    e2, a2 = p.effective(p.top)
    t1, t2 = p.bottom.thickness, p.top.thickness
    m, n = t1 / t2, e1 / e2
    h = t1 + t2
    kappa = 6 * (a1 - a2) * p.delta_t * (1 + m) ** 2 / (
        h * (3 * (1 + m) ** 2 + (1 + m * n) * (m * m + 1 / (m * n))))
    return kappa, kappa * p.length ** 2 / 2


def layered_beam_deflection(p: BimorphParams) -> tuple[float, float]:
    """Curvature and tip deflection from force and moment balance over the section.

    Axial strain is ``e0 - kappa z``; the two unknowns come from requiring zero net
    force and zero net moment, with the section integrals evaluated by quadrature.
    The deflection then follows from integrating ``w'' = kappa`` twice.
    """
    p.validate()
    layers = []
    z = 0.0
    for layer in (p.bottom, p.top):
        e, a = p.effective(layer)
        layers.append((z, z + layer.thickness, e, a))
        z += layer.thickness

    def section(fn):
        return sum(integrate.quad(lambda s, e=e, a=a: fn(s, e, a), z0, z1, epsabs=0, epsrel=1e-13)[0]
                   for z0, z1, e, a in layers)

    s0 = section(lambda s, e, a: e)
    s1 = section(lambda s, e, a: e * s)
    s2 = section(lambda s, e, a: e * s * s)
    f0 = section(lambda s, e, a: e * a * p.delta_t)
    f1 = section(lambda s, e, a: e * a * p.delta_t * s)
    # N = s0 e0 - s1 kappa - f0 = 0 ;  M = s1 e0 - s2 kappa - f1 = 0
    e0, kappa = np.linalg.solve([[s0, -s1], [s1, -s2]], [f0, f1])
    # w(L) = int_0^L (L - x) w''(x) dx for a clamped root
    tip = integrate.quad(lambda x: kappa * (p.length - x), 0.0, p.length, epsrel=1e-13)[0]
    return float(kappa), float(tip)


def rod_resistance(length: float, area: float, sigma: float) -> float:
    """Electrical resistance L / (sigma A); ohms when lengths are um and sigma is S/um."""
    if not (length > 0 and area > 0 and sigma > 0):
        raise OracleDomainError("length, area and conductivity must be positive")
    return length / (sigma * area)
