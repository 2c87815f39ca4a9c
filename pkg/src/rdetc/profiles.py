"""Spatially varying reaction coefficient lambda(x) on [0, 1].

A profile is carried either as grid samples (re-evaluated by cubic
interpolation) or as a tagged closed form; the closed form wins whenever
present so that downstream quadratures and the operator trainer can query
lambda at arbitrary points without resampling noise.

Closed-form families:
    constant            params = {"value": c}          lambda(x) = c
    chebyshev           params = {"amplitude": c,
                                  "frequency": g}      lambda(x) = c*cos(g*acos(x))
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ValidationError

_FAMILIES = ("constant", "chebyshev")


def _eval_family(analytic_id: str, params: dict, x):
    x = np.asarray(x, dtype=float)
    if analytic_id == "constant":
        return np.full_like(x, float(params["value"]))
    if analytic_id == "chebyshev":
        c = float(params["amplitude"])
        g = float(params["frequency"])
        return c * np.cos(g * np.arccos(np.clip(x, -1.0, 1.0)))
    raise ValidationError(f"unknown analytic_id {analytic_id!r}; known: {_FAMILIES}")


@dataclass(frozen=True, eq=False)
class ReactionProfile:
    """Reaction coefficient samples on a uniform x-grid over [0, 1].

    lambda_max and lambda_bar are always recomputed from the samples,
    never cached, so they cannot go stale after construction.
    """

    samples: np.ndarray
    analytic_id: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 3:
            raise ValidationError("profile needs at least 3 samples on [0, 1]")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("profile samples must be finite")
        object.__setattr__(self, "samples", samples)
        if self.analytic_id is not None and self.analytic_id not in _FAMILIES:
            raise ValidationError(
                f"unknown analytic_id {self.analytic_id!r}; known: {_FAMILIES}"
            )
        samples.setflags(write=False)

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value, n=3):
        return cls(np.full(n, float(value)), "constant", {"value": float(value)})

    @classmethod
    def chebyshev(cls, amplitude, frequency, n=101):
        """lambda(x) = amplitude * cos(frequency * acos(x))."""
        params = {"amplitude": float(amplitude), "frequency": float(frequency)}
        x = np.linspace(0.0, 1.0, n)
        return cls(_eval_family("chebyshev", params, x), "chebyshev", params)

    @classmethod
    def from_samples(cls, samples):
        return cls(np.asarray(samples, dtype=float))

    @classmethod
    def from_callable(cls, fn, n=101):
        x = np.linspace(0.0, 1.0, n)
        return cls(np.asarray(fn(x), dtype=float))

    # -- derived scalars ----------------------------------------------

    @property
    def n(self):
        return self.samples.size

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.samples.size)

    @property
    def lambda_max(self):
        """max of lambda over [0,1] (signed)."""
        return float(np.max(self.samples))

    @property
    def lambda_bar(self):
        """max of |lambda| over [0,1]."""
        return float(np.max(np.abs(self.samples)))

    # -- evaluation ----------------------------------------------------

    @cached_property
    def _spline(self):
        return CubicSpline(self.grid, self.samples)

    def __call__(self, x):
        """Evaluate lambda at arbitrary x in [0, 1]; closed form wins."""
        if self.analytic_id is not None:
            return _eval_family(self.analytic_id, self.params, x)
        x = np.asarray(x, dtype=float)
        return self._spline(np.clip(x, 0.0, 1.0))

    def integral(self, upper):
        """int_0^upper lambda, vectorized in upper.

        constant and chebyshev families integrate in closed form; sampled
        profiles integrate the cubic interpolant exactly.
        """
        upper = np.asarray(upper, dtype=float)
        if self.analytic_id == "constant":
            return float(self.params["value"]) * upper
        if self.analytic_id == "chebyshev":
            return _chebyshev_integral(self.params, upper)
        anti = self._spline.antiderivative()
        return anti(np.clip(upper, 0.0, 1.0)) - anti(0.0)

    def resample(self, n):
        """Profile with n samples; closed-form tag survives resampling."""
        x = np.linspace(0.0, 1.0, n)
        return ReactionProfile(self(x), self.analytic_id, dict(self.params))


def _chebyshev_integral(params, upper):
    """int_0^u c*cos(g*acos(x)) dx via x = cos(t) substitution.

    With cos(gt)sin(t) = (sin((g+1)t) - sin((g-1)t))/2 the t-antiderivative
    is (-cos((g+1)t)/(g+1) + cos((g-1)t)/(g-1))/2, evaluated from
    t = acos(u) up to pi/2 (dx = -sin t dt flips the direction).
    """
    c = float(params["amplitude"])
    g = float(params["frequency"])
    u = np.clip(np.asarray(upper, dtype=float), -1.0, 1.0)
    t = np.arccos(u)
    t0 = np.pi / 2.0
    if g == 0.0:
        return c * np.asarray(upper, dtype=float)
    if g == 1.0:
        # cos(acos x) = x: integral of c*x
        return 0.5 * c * u * u
    def anti(tv):
        return 0.5 * c * (-np.cos((g + 1.0) * tv) / (g + 1.0)
                          + np.cos((g - 1.0) * tv) / (g - 1.0))
    return anti(t0) - anti(t)
