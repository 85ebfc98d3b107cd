"""Parametric time transforms linking phase-type laws to their transformed
(inhomogeneous) counterparts.

A transform carries g, its inverse and the absolute derivative of the
inverse; evaluating a transformed density only ever needs those three.
The Pareto/Weibull/Gompertz families are strictly increasing bijections of
(0, inf); the GEV family is decreasing in y with a parameter-dependent
support, which callers must respect via ``in_support``.
"""

from __future__ import annotations

import numpy as np

_XI_ZERO = 1e-9


class TransformFamily:
    """Base class.  Subclasses define the family name, parameter names and
    the triple (g, g_inv, |d g_inv / dx|)."""

    name: str = ""
    param_names: tuple = ()
    increasing: bool = True

    def __init__(self, params=()):
        self.params = np.asarray(params, dtype=float).reshape(-1)
        if self.params.shape[0] != len(self.param_names):
            raise ValueError(
                f"{self.name} transform takes {len(self.param_names)} "
                f"parameter(s), got {self.params.shape[0]}")
        if not self.feasible(self.params):
            raise ValueError(f"invalid {self.name} parameters {self.params}")

    def with_params(self, params) -> "TransformFamily":
        return type(self)(params)

    # parameter-space validity, independent of data
    @staticmethod
    def feasible(params) -> bool:
        return True

    def in_support(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) > 0.0

    def __repr__(self):
        inside = ", ".join(f"{n}={v:g}" for n, v in zip(self.param_names, self.params))
        return f"{self.name}({inside})"


class Identity(TransformFamily):
    name = "identity"

    def g(self, y):
        return np.asarray(y, dtype=float)

    def g_inv(self, x):
        return np.asarray(x, dtype=float)

    def g_inv_abs_deriv(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


class Pareto(TransformFamily):
    """g(y) = beta (e^y - 1); the transformed law has a power tail."""

    name = "pareto"
    param_names = ("beta",)

    @staticmethod
    def feasible(params) -> bool:
        return params[0] > 0.0

    def g(self, y):
        return self.params[0] * np.expm1(np.asarray(y, dtype=float))

    def g_inv(self, x):
        return np.log1p(np.asarray(x, dtype=float) / self.params[0])

    def g_inv_abs_deriv(self, x):
        return 1.0 / (np.asarray(x, dtype=float) + self.params[0])


class Weibull(TransformFamily):
    """g(y) = y^{1/beta}."""

    name = "weibull"
    param_names = ("beta",)

    @staticmethod
    def feasible(params) -> bool:
        return params[0] > 0.0

    def g(self, y):
        return np.asarray(y, dtype=float) ** (1.0 / self.params[0])

    def g_inv(self, x):
        return np.asarray(x, dtype=float) ** self.params[0]

    def g_inv_abs_deriv(self, x):
        b = self.params[0]
        return b * np.asarray(x, dtype=float) ** (b - 1.0)


class Gompertz(TransformFamily):
    """g(y) = log(beta y + 1) / beta; lighter-than-exponential tail."""

    name = "gompertz"
    param_names = ("beta",)

    @staticmethod
    def feasible(params) -> bool:
        return params[0] > 0.0

    def g(self, y):
        b = self.params[0]
        return np.log1p(b * np.asarray(y, dtype=float)) / b

    def g_inv(self, x):
        b = self.params[0]
        return np.expm1(b * np.asarray(x, dtype=float)) / b

    def g_inv_abs_deriv(self, x):
        b = self.params[0]
        return np.exp(b * np.asarray(x, dtype=float))


class GEV(TransformFamily):
    """Generalized-extreme-value transform.

    g_inv(x) = (1 + xi (x - mu) / sigma)^{-1/xi}, xi != 0, or
    exp(-(x - mu)/sigma) at xi = 0.  Decreasing in x, so survival of the
    transformed variable equals the CDF of the base law at g_inv(x).
    For xi > 0 the support is x > mu - sigma/xi; for xi < 0 it is
    x < mu - sigma/xi.
    """

    name = "gev"
    param_names = ("mu", "sigma", "xi")
    increasing = False

    @staticmethod
    def feasible(params) -> bool:
        return params[1] > 0.0

    def _z(self, x):
        mu, sigma, xi = self.params
        return 1.0 + xi * (np.asarray(x, dtype=float) - mu) / sigma

    def in_support(self, x) -> np.ndarray:
        mu, sigma, xi = self.params
        if abs(xi) < _XI_ZERO:
            return np.ones_like(np.asarray(x, dtype=float), dtype=bool)
        return self._z(x) > 0.0

    def g(self, y):
        mu, sigma, xi = self.params
        y = np.asarray(y, dtype=float)
        if abs(xi) < _XI_ZERO:
            return mu - sigma * np.log(y)
        return mu + sigma * np.expm1(-xi * np.log(y)) / xi

    def g_inv(self, x):
        mu, sigma, xi = self.params
        if abs(xi) < _XI_ZERO:
            return np.exp(-(np.asarray(x, dtype=float) - mu) / sigma)
        return np.exp(-np.log1p(xi * (np.asarray(x, dtype=float) - mu) / sigma) / xi)

    def g_inv_abs_deriv(self, x):
        mu, sigma, xi = self.params
        u = self.g_inv(x)
        if abs(xi) < _XI_ZERO:
            return u / sigma
        return u ** (1.0 + xi) / sigma


_FAMILIES = {cls.name: cls for cls in (Identity, Pareto, Weibull, Gompertz, GEV)}


def make_transform(name: str, params=()) -> TransformFamily:
    """Construct a transform by family name."""
    try:
        cls = _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown transform family {name!r}") from None
    return cls(params)


def family_names() -> tuple:
    return tuple(_FAMILIES)
