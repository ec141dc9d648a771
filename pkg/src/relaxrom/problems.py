"""Fluxes and initial conditions used by the experiments."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import wrap

__all__ = [
    "Flux",
    "linear_flux",
    "burgers_flux",
    "InitialCondition",
    "sine",
    "shifted_sine",
    "gauss_bump",
    "step",
    "combined",
]


@dataclass(frozen=True)
class Flux:
    f: Callable
    df: Callable
    label: str = "flux"

    def __call__(self, u):
        return self.f(u)


def linear_flux(a: float = 1.0) -> Flux:
    a = float(a)
    return Flux(lambda u: a * np.asarray(u, dtype=float),
                lambda u: np.full_like(np.asarray(u, dtype=float), a),
                f"linear(a={a:g})")


def burgers_flux() -> Flux:
    return Flux(lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
                lambda u: np.asarray(u, dtype=float),
                "burgers")


@dataclass(frozen=True)
class InitialCondition:
    """A function on the torus together with the points where it jumps.

    ``breakpoints`` are added to the quadrature partition whenever the
    function is integrated against the basis.
    """

    func: Callable
    breakpoints: tuple = field(default_factory=tuple)
    label: str = "u0"

    def __call__(self, x):
        return self.func(wrap(np.asarray(x, dtype=float)))


def _chi(x, lo=0.0, hi=0.5):
    return ((x >= lo) & (x < hi)).astype(float)


def sine() -> InitialCondition:
    return InitialCondition(lambda x: np.sin(np.pi * x), (), "sine")


def shifted_sine(offset: float = 0.5) -> InitialCondition:
    return InitialCondition(lambda x: offset + np.sin(np.pi * x), (), f"{offset:g}+sine")


def gauss_bump() -> InitialCondition:
    """``exp(-4 x^2) - exp(-1)`` on (-1/2, 1/2), zero elsewhere."""
    def w0(x):
        return np.where(np.abs(x) < 0.5, np.exp(-4.0 * x**2) - np.exp(-1.0), 0.0)
    return InitialCondition(w0, (-0.5, 0.5), "gauss_bump")


def step(a: float = 1.0) -> InitialCondition:
    """``a (chi_[0, 1/2) - 1)``."""
    return InitialCondition(lambda x: a * (_chi(x) - 1.0), (0.0, 0.5), f"step(a={a:g})")


def combined(a: float = 0.2) -> InitialCondition:
    """``sin(pi x) + a (chi_[0, 1/2) - 1)``."""
    return InitialCondition(lambda x: np.sin(np.pi * x) + a * (_chi(x) - 1.0),
                            (0.0, 0.5), f"sine+step(a={a:g})")
