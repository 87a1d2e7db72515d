"""Analytic benchmark systems with hand-derived Jacobians.

The catalog covers the difficulty axes the solvers care about: nonlinearity
(pendulum), underactuation (planar quadrotor), an LQ baseline (double
integrator) and symplectic structure (oscillator). Dynamics are written over
the dual-aware math functions so the same code runs under forward-mode AD.

Default parameters:

    pendulum          m=1.0, l=1.0, b=0.1, g=9.81
    double_integrator (none)
    oscillator        k=1.0
    planar_quadrotor  m=0.5, inertia=0.01, l=0.17, g=9.81
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ControlledSystem
from .dual import cos, sin, stack
from .errors import ConfigurationError
from .integrate import SymplecticSystem


class Pendulum(SymplecticSystem):
    """Torque-actuated pendulum; state [theta, thetadot], theta = 0 hanging.

    thetadd = (u - m g l sin(theta) - b thetadot) / (m l^2)
    """

    def __init__(self, m=1.0, l=1.0, b=0.1, g=9.81):
        if m <= 0 or l <= 0:
            raise ConfigurationError("pendulum needs m > 0 and l > 0")
        if b < 0 or g < 0:
            raise ConfigurationError("pendulum needs b >= 0 and g >= 0")
        super().__init__(1, 1, 1)
        self.m, self.l, self.b, self.g = float(m), float(l), float(b), float(g)

    def acceleration(self, p, v, u, t):
        ml2 = self.m * self.l * self.l
        a = (u[0] - self.m * self.g * self.l * sin(p[0]) - self.b * v[0]) / ml2
        return stack(a)

    def analytic_jacobians(self, x, u, t):
        ml2 = self.m * self.l * self.l
        A = np.array([[0.0, 1.0],
                      [-self.g / self.l * np.cos(x[0]), -self.b / ml2]])
        B = np.array([[0.0], [1.0 / ml2]])
        return A, B

    def energy(self, x):
        """Kinetic plus potential energy, zero at the hanging rest state."""
        return (0.5 * self.m * self.l ** 2 * x[1] ** 2
                + self.m * self.g * self.l * (1.0 - np.cos(x[0])))


class DoubleIntegrator(SymplecticSystem):
    """Canonical LQ plant: xdot1 = x2, xdot2 = u."""

    def __init__(self):
        super().__init__(1, 1, 1)

    def acceleration(self, p, v, u, t):
        return stack(u[0])

    def analytic_jacobians(self, x, u, t):
        return np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]])


class Oscillator(SymplecticSystem):
    """Harmonic oscillator  xdd = -k x + u; energy (k p^2 + v^2) / 2."""

    def __init__(self, k=1.0):
        if k <= 0:
            raise ConfigurationError("oscillator needs k > 0")
        super().__init__(1, 1, 1)
        self.k = float(k)

    def acceleration(self, p, v, u, t):
        return stack(-self.k * p[0] + u[0])

    def analytic_jacobians(self, x, u, t):
        return np.array([[0.0, 1.0], [-self.k, 0.0]]), np.array([[0.0], [1.0]])

    def energy(self, x):
        return 0.5 * (self.k * x[0] ** 2 + x[1] ** 2)


class PlanarQuadrotor(ControlledSystem):
    """Planar quadrotor; state [x, z, phi, xd, zd, phid], controls [F1, F2].

    xdd  = -(F1 + F2) sin(phi) / m
    zdd  =  (F1 + F2) cos(phi) / m - g
    phidd = l (F1 - F2) / inertia
    """

    def __init__(self, m=0.5, inertia=0.01, l=0.17, g=9.81):
        if m <= 0 or inertia <= 0 or l <= 0:
            raise ConfigurationError("quadrotor needs m, inertia, l > 0")
        super().__init__(6, 2)
        self.m, self.inertia, self.l, self.g = float(m), float(inertia), float(l), float(g)

    def rhs(self, x, u, t):
        thrust = u[0] + u[1]
        return stack(
            x[3], x[4], x[5],
            -thrust * sin(x[2]) / self.m,
            thrust * cos(x[2]) / self.m - self.g,
            self.l * (u[0] - u[1]) / self.inertia,
        )

    def analytic_jacobians(self, x, u, t):
        thrust = u[0] + u[1]
        s, c = np.sin(x[2]), np.cos(x[2])
        A = np.zeros((6, 6))
        A[0, 3] = A[1, 4] = A[2, 5] = 1.0
        A[3, 2] = -thrust * c / self.m
        A[4, 2] = -thrust * s / self.m
        B = np.zeros((6, 2))
        B[3, 0] = B[3, 1] = -s / self.m
        B[4, 0] = B[4, 1] = c / self.m
        B[5, 0] = self.l / self.inertia
        B[5, 1] = -self.l / self.inertia
        return A, B

    def hover_control(self):
        return np.array([0.5 * self.m * self.g, 0.5 * self.m * self.g])


def pendulum(m=1.0, l=1.0, b=0.1, g=9.81):
    return Pendulum(m=m, l=l, b=b, g=g)


def double_integrator():
    return DoubleIntegrator()


def oscillator(k=1.0):
    return Oscillator(k=k)


def planar_quadrotor(m=0.5, inertia=0.01, l=0.17, g=9.81):
    return PlanarQuadrotor(m=m, inertia=inertia, l=l, g=g)


@dataclass
class ModelCatalogEntry:
    name: str
    state_dim: int
    control_dim: int
    parameters: dict = field(default_factory=dict)
    factory: callable = None

    def build(self, **overrides):
        params = dict(self.parameters)
        unknown = set(overrides) - set(params)
        if unknown:
            raise ConfigurationError(
                f"unknown parameter(s) {sorted(unknown)} for model {self.name!r}")
        params.update(overrides)
        return self.factory(**params)


CATALOG = {
    "pendulum": ModelCatalogEntry("pendulum", 2, 1,
                                  {"m": 1.0, "l": 1.0, "b": 0.1, "g": 9.81}, pendulum),
    "double_integrator": ModelCatalogEntry("double_integrator", 2, 1, {},
                                           double_integrator),
    "oscillator": ModelCatalogEntry("oscillator", 2, 1, {"k": 1.0}, oscillator),
    "planar_quadrotor": ModelCatalogEntry(
        "planar_quadrotor", 6, 2,
        {"m": 0.5, "inertia": 0.01, "l": 0.17, "g": 9.81}, planar_quadrotor),
}


def by_name(name, **overrides):
    """Instantiate a catalog model by name with parameter overrides."""
    if name not in CATALOG:
        raise ConfigurationError(
            f"unknown model {name!r}; available: {sorted(CATALOG)}")
    return CATALOG[name].build(**overrides)
