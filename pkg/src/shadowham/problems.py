"""Catalog of separable Hamiltonians ``H = p^T M^{-1} p / 2 + U(q)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import gmpy2
from gmpy2 import mpfr

from shadowham.xnum import DomainError, xreal

Vector = Tuple[mpfr, ...]


class SingularityError(ArithmeticError):
    """The potential or its gradient was evaluated at a singular point."""


@dataclass(frozen=True)
class InitialState:
    p0: Vector
    q0: Vector
    beta0: mpfr = field(default_factory=lambda: mpfr(0))

    def __post_init__(self):
        if self.beta0 != 0:
            raise ValueError("the auxiliary variable must start at zero")
        if len(self.p0) != len(self.q0):
            raise ValueError("p0 and q0 must have the same length")


@dataclass(frozen=True)
class SeparableHamiltonian:
    """Problem definition consumed by the integrator.

    Attributes:
        name: Short identifier used in file names and CSV output.
        dim: Number of degrees of freedom ``d``.
        potential: ``U(q)``.
        gradient: ``U_q(q)`` as a tuple of length ``d``.
        inverse_mass: Diagonal of ``M^{-1}``.
        initial: Builds an :class:`InitialState` from the problem parameter.
        gradient_and_potential: Optional fused evaluation returning
            ``(U_q(q), U(q))``; the integrator uses it when present.
    """

    name: str
    dim: int
    potential: Callable[[Sequence[mpfr]], mpfr]
    gradient: Callable[[Sequence[mpfr]], Vector]
    inverse_mass: Vector
    initial: Callable[..., InitialState]
    gradient_and_potential: Optional[Callable[[Sequence[mpfr]], Tuple[Vector, mpfr]]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if len(self.inverse_mass) != self.dim:
            raise ValueError("inverse_mass must have one entry per degree of freedom")
        if any(m <= 0 for m in self.inverse_mass):
            raise ValueError("inverse_mass entries must be positive")

    @property
    def unit_mass(self) -> bool:
        return all(m == 1 for m in self.inverse_mass)

    def grad_pot(self, q: Sequence[mpfr]) -> Tuple[Vector, mpfr]:
        if self.gradient_and_potential is not None:
            return self.gradient_and_potential(q)
        return self.gradient(q), self.potential(q)


def _ones(d: int) -> Vector:
    return tuple(mpfr(1) for _ in range(d))


def _vec(values, d: int, what: str) -> Vector:
    out = tuple(xreal(v) for v in values)
    if len(out) != d:
        raise ValueError(f"{what} must have length {d}, got {len(out)}")
    return out


def energy(ham: SeparableHamiltonian, p: Sequence[mpfr], q: Sequence[mpfr]) -> mpfr:
    if len(p) != ham.dim or len(q) != ham.dim:
        raise ValueError(f"expected vectors of length {ham.dim}, got {len(p)} and {len(q)}")
    kinetic = gmpy2.fsum(m * pi * pi for m, pi in zip(ham.inverse_mass, p)) / 2
    return kinetic + ham.potential(q)


# -- pendulum: H = p^2/2 - cos q ------------------------------------------

def _pendulum_pot(q):
    return -gmpy2.cos(q[0])


def _pendulum_grad(q):
    return (gmpy2.sin(q[0]),)


def _pendulum_both(q):
    s, c = gmpy2.sin_cos(q[0])
    return (s,), -c


def pendulum() -> SeparableHamiltonian:
    def initial(p0=1) -> InitialState:
        return InitialState(p0=(xreal(p0),), q0=(mpfr(0),))

    return SeparableHamiltonian(
        name="pendulum",
        dim=1,
        potential=_pendulum_pot,
        gradient=_pendulum_grad,
        inverse_mass=_ones(1),
        initial=initial,
        gradient_and_potential=_pendulum_both,
    )


# -- Kepler: H = |p|^2/2 - 1/|q| ----------------------------------------

def _kepler_both(q):
    r2 = q[0] * q[0] + q[1] * q[1]
    if r2 == 0:
        raise SingularityError("Kepler potential evaluated at the origin")
    inv_r = 1 / gmpy2.sqrt(r2)
    inv_r3 = inv_r / r2
    return (q[0] * inv_r3, q[1] * inv_r3), -inv_r


def kepler() -> SeparableHamiltonian:
    def initial(ecc="0.6") -> InitialState:
        e = xreal(ecc)
        if not 0 <= e < 1:
            raise DomainError(f"eccentricity must lie in [0, 1), got {e}")
        return InitialState(
            p0=(mpfr(0), gmpy2.sqrt((1 + e) / (1 - e))),
            q0=(1 - e, mpfr(0)),
        )

    return SeparableHamiltonian(
        name="kepler",
        dim=2,
        potential=lambda q: _kepler_both(q)[1],
        gradient=lambda q: _kepler_both(q)[0],
        inverse_mass=_ones(2),
        initial=initial,
        gradient_and_potential=_kepler_both,
    )


# -- Henon-Heiles -----------------------------------------------------------

def _hh_pot(q):
    x, y = q
    return (x * x + y * y + 2 * x * x * y - 2 * y * y * y / 3) / 2


def _hh_grad(q):
    x, y = q
    return (x + 2 * x * y, y + x * x - y * y)


def henon_heiles() -> SeparableHamiltonian:
    def initial(p1="0.1") -> InitialState:
        return InitialState(p0=(xreal(p1), mpfr(0)), q0=(mpfr(0), mpfr(0)))

    return SeparableHamiltonian(
        name="henon-heiles",
        dim=2,
        potential=_hh_pot,
        gradient=_hh_grad,
        inverse_mass=_ones(2),
        initial=initial,
    )


# -- exactly integrable test problems ---------------------------------------

def free_particle(d: int = 1) -> SeparableHamiltonian:
    """``U = 0``: every splitting method integrates this exactly."""
    if d < 1:
        raise ValueError("dimension must be positive")
    zero = tuple(mpfr(0) for _ in range(d))

    def initial(p0=1, q0=None) -> InitialState:
        ps = (p0,) * d if not isinstance(p0, (tuple, list)) else p0
        qs = zero if q0 is None else (q0 if isinstance(q0, (tuple, list)) else (q0,) * d)
        return InitialState(p0=_vec(ps, d, "p0"), q0=_vec(qs, d, "q0"))

    return SeparableHamiltonian(
        name="free",
        dim=d,
        potential=lambda q: mpfr(0),
        gradient=lambda q: zero,
        inverse_mass=_ones(d),
        initial=initial,
    )


def harmonic_oscillator() -> SeparableHamiltonian:
    """``U = q^2/2``; linear, so its modified Hamiltonian is autonomous."""

    def initial(p0=1, q0=0) -> InitialState:
        return InitialState(p0=(xreal(p0),), q0=(xreal(q0),))

    return SeparableHamiltonian(
        name="harmonic",
        dim=1,
        potential=lambda q: q[0] * q[0] / 2,
        gradient=lambda q: (q[0],),
        inverse_mass=_ones(1),
        initial=initial,
    )


CATALOG = {
    "pendulum": pendulum,
    "kepler": kepler,
    "henon-heiles": henon_heiles,
    "free": free_particle,
    "harmonic": harmonic_oscillator,
}
