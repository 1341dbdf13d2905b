"""Diffusion nonlinearities: growth hypotheses, prototypes, regularization.

A diffusion law is described by the non-decreasing function beta with
beta(0) = 0; the coefficient a(t) = beta(t)/t multiplies the gradient in
the operator -div(a(|grad u|) grad u).  Derived quantities:

    A(t) = t*beta(t)        (assumed convex, with p-growth bounds)
    B(t) = integral of beta (the energy density)

``moreau_yosida`` builds an inf-convolution approximation of A together
with an ellipticity shift, producing a law with two-sided slope bounds on
beta that the slice solver's Newton method requires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

#: Below this threshold a(t) = beta(t)/t is evaluated at the threshold
#: instead, so prototypes with blow-up at 0 (p < 2) stay finite.
TINY_T = 1e-14


def _as_array(t):
    return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Nonlinearity:
    """Immutable diffusion law; all evaluation maps are pure and vectorized."""

    name: str
    p: float
    beta: Callable
    antideriv: Callable
    C1: float = 1.0
    C2: float = 1.0
    dbeta: Callable | None = None
    smooth_eps: float | None = None

    def a(self, t):
        """Coefficient beta(t)/t, evaluated no closer to 0 than TINY_T."""
        t = np.maximum(_as_array(t), TINY_T)
        return self.beta(t) / t

    def A(self, t):
        t = _as_array(t)
        return t * self.beta(t)

    def B(self, t):
        return self.antideriv(_as_array(t))

    def flux(self, g):
        """Vector field beta(|g|) g/|g| on arrays of shape (..., n); 0 at 0."""
        g = _as_array(g)
        mag = np.sqrt((g ** 2).sum(axis=-1))
        coef = np.where(mag > 0, self.beta(np.maximum(mag, TINY_T)) / np.maximum(mag, TINY_T), 0.0)
        return coef[..., None] * g


def make_p_laplacian(p):
    """The power law beta(t) = t^(p-1), so A(t) = t^p and B(t) = t^p / p."""
    if p <= 1:
        raise ValueError(f"growth exponent must exceed 1, got {p}")
    return Nonlinearity(
        name=f"p_laplacian({p:g})",
        p=float(p),
        beta=lambda t: _as_array(t) ** (p - 1.0),
        antideriv=lambda t: _as_array(t) ** p / p,
        dbeta=lambda t: (p - 1.0) * np.maximum(_as_array(t), TINY_T) ** (p - 2.0),
        smooth_eps=1.0 if p == 2 else None,
    )


def shifted_p(p, tau):
    """Power law with a linear ellipticity shift: beta(t) = t^(p-1) + tau*t.

    The shift keeps the slope of beta at least tau everywhere; for p > 2 the
    upper growth constant becomes 1 + tau.
    """
    if p <= 1:
        raise ValueError(f"growth exponent must exceed 1, got {p}")
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    # For p < 2 the linear shift dominates at infinity; the (H2)-style
    # bounds then hold with exponent max(p, 2).
    growth = max(p, 2.0) if tau > 0 else float(p)
    return Nonlinearity(
        name=f"shifted_p({p:g},{tau:g})",
        p=growth,
        C2=1.0 + tau,
        beta=lambda t: _as_array(t) ** (p - 1.0) + tau * _as_array(t),
        antideriv=lambda t: _as_array(t) ** p / p + 0.5 * tau * _as_array(t) ** 2,
        dbeta=lambda t: (p - 1.0) * np.maximum(_as_array(t), TINY_T) ** (p - 2.0) + tau,
        smooth_eps=1.0 / (1.0 + tau) if p == 2 else None,
    )


def from_beta_table(table, p=2.0, C1=1.0, C2=1.0):
    """Law from tabulated (t, beta) pairs, piecewise linear in between.

    ``table`` is an (k, 2) array or a path to a two-column text file; the
    first row must be ``0 0`` and t must increase strictly.  Beyond the last
    node beta continues with its final slope.
    """
    if isinstance(table, (str, bytes)) or hasattr(table, "__fspath__"):
        table = np.loadtxt(table)
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
        raise ValueError("table must have two columns and at least two rows")
    ts, bs = table[:, 0], table[:, 1]
    if ts[0] != 0.0 or bs[0] != 0.0:
        raise ValueError("first table row must be '0 0'")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("table t values must increase strictly")
    slopes = np.diff(bs) / np.diff(ts)
    # Exact antiderivative of the piecewise-linear interpolant.
    seg = 0.5 * (bs[:-1] + bs[1:]) * np.diff(ts)
    cumB = np.concatenate([[0.0], np.cumsum(seg)])
    last = slopes[-1]

    def beta(t):
        t = _as_array(t)
        out = np.interp(t, ts, bs)
        over = t > ts[-1]
        return np.where(over, bs[-1] + last * (t - ts[-1]), out)

    def antideriv(t):
        t = _as_array(t)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        d = np.clip(t - ts[idx], 0.0, None)
        out = cumB[idx] + bs[idx] * d + 0.5 * slopes[idx] * d ** 2
        over = t > ts[-1]
        dd = t - ts[-1]
        return np.where(over, cumB[-1] + bs[-1] * dd + 0.5 * last * dd ** 2, out)

    def dbeta(t):
        t = _as_array(t)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    lo, hi = slopes.min(), max(slopes.max(), last)
    eps = min(lo, 1.0 / hi) if lo > 0 and hi > 0 else None
    return Nonlinearity("table", float(p), beta, antideriv, C1, C2, dbeta, eps)


# ---------------------------------------------------------------------------
# Hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    first_violation: float | None = None
    detail: str = ""


@dataclass
class ValidationReport:
    """Per-hypothesis verdicts over a documented log-spaced sample set."""

    t_min: float
    t_max: float
    sample_count: int
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def hypothesis_samples(sample_count=256, t_min=1e-6, t_max=1e3):
    """The log-spaced sample set on (0, t_max] used by validate_hypotheses."""
    return np.geomspace(t_min, t_max, sample_count)


def validate_hypotheses(nl, sample_count=256, t_min=1e-6, t_max=1e3):
    """Sampling-based check of monotonicity, growth bounds and convexity.

    The verdict is only about the sampled range; the report records it.
    Slope-band bounds are checked additionally when ``nl.smooth_eps`` is set.
    """
    if sample_count < 3:
        raise ValueError("need at least 3 samples")
    ts = hypothesis_samples(sample_count, t_min, t_max)
    bvals = nl.beta(ts)
    avals = nl.A(ts)
    slack = 1e-12 * max(1.0, float(np.abs(bvals).max()))
    checks = []

    def first_bad(mask, where):
        idx = np.nonzero(mask)[0]
        return float(where[idx[0]]) if len(idx) else None

    bad = np.diff(bvals) < -slack
    v = first_bad(bad, ts[1:])
    b0 = float(nl.beta(0.0))
    ok = v is None and abs(b0) <= slack
    checks.append(CheckResult(
        "beta-nondecreasing", ok, v if v is not None else (0.0 if abs(b0) > slack else None),
        "beta must not decrease and beta(0) must vanish"))

    bad = avals < nl.C1 * (ts ** nl.p - 1.0) - slack
    v = first_bad(bad, ts)
    checks.append(CheckResult("growth-lower", v is None, v,
                              "C1*(t^p - 1) <= A(t)"))

    bad = bvals > nl.C2 * (ts ** (nl.p - 1.0) + 1.0) + slack
    v = first_bad(bad, ts)
    checks.append(CheckResult("growth-upper", v is None, v,
                              "beta(t) <= C2*(t^(p-1) + 1)"))

    mids = 0.5 * (ts[:-2] + ts[2:])
    bad = nl.A(mids) > 0.5 * (avals[:-2] + avals[2:]) + slack
    v = first_bad(bad, mids)
    checks.append(CheckResult("A-convex", v is None, v,
                              "midpoint convexity of A on sampled triples"))

    if nl.smooth_eps is not None:
        eps = nl.smooth_eps
        chords = np.diff(bvals) / np.diff(ts)
        bad = (chords < eps - slack) | (chords > 1.0 / eps + slack)
        v = first_bad(bad, ts[1:])
        checks.append(CheckResult("slope-band", v is None, v,
                                  "eps <= (beta(t2)-beta(t1))/(t2-t1) <= 1/eps"))

    return ValidationReport(float(ts[0]), float(ts[-1]), sample_count, checks)


# ---------------------------------------------------------------------------
# Moreau-Yosida regularization
# ---------------------------------------------------------------------------

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, lo, hi, tol):
    """Vectorized golden-section minimizer of a unimodal fn on [lo, hi].

    The bracket width target is tol relative to max(1, |hi|), since an
    absolute width below the floating-point spacing is unreachable for
    large arguments.  Returns (argmin, min) with the endpoints included as
    candidates, so the reported minimum never exceeds fn at either one.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    scale = np.maximum(1.0, np.abs(b))
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    # Width shrinks by the golden ratio per step; cap guards fp stagnation.
    max_iter = int(np.ceil(np.log(max(np.max((b - a) / scale) / tol, 1.0))
                           / -np.log(_INVPHI))) + 5
    for _ in range(max_iter):
        if np.max((b - a) / scale) <= tol:
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        fc, fd = fn(c), fn(d)
    mid = 0.5 * (a + b)
    cand = np.stack([mid, np.asarray(lo, dtype=float) * np.ones_like(mid),
                     np.asarray(hi, dtype=float) * np.ones_like(mid)])
    vals = fn(cand)
    pick = np.argmin(vals, axis=0)
    take = np.take_along_axis
    arg = take(cand, pick[None], 0)[0]
    return arg, take(vals, pick[None], 0)[0]


def _cached_antiderivative(beta, t_max=1e6, points=16384):
    """Antiderivative of beta cached on a log grid at construction time.

    The stored object is the exact (piecewise quadratic) antiderivative of
    the piecewise-linear interpolant of beta, so differentiating it
    recovers the interpolated beta to rounding error.  Beyond t_max the
    last slope continues.
    """
    grid = np.concatenate([[0.0], np.geomspace(1e-8, t_max, points)])
    bvals = beta(grid)
    slopes = np.diff(bvals) / np.diff(grid)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (bvals[1:] + bvals[:-1]) * np.diff(grid))])

    def B(t):
        t = _as_array(t)
        idx = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(grid) - 2)
        d = np.clip(t - grid[idx], 0.0, None)
        out = cum[idx] + bvals[idx] * d + 0.5 * slopes[idx] * d ** 2
        over = t > t_max
        if np.any(over):
            dd = np.where(over, t - t_max, 0.0)
            out = np.where(over, cum[-1] + bvals[-1] * dd + 0.5 * slopes[-1] * dd ** 2, out)
        return out

    return B


class RegularizedNonlinearity:
    """Inf-convolution smoothing of A plus an ellipticity shift tau.

    The envelope A_eps(t) = inf_s (|t-s|^2/(2 eps) + A(s)) is computed by
    bracketed golden-section minimization on [0, t] (the objective is
    strictly convex and increasing past t), with the proximal point as the
    argmin.  The regularized law is

        beta(t) = A_eps(t)/t + tau*t,     a(t) = A_eps(t)/t^2 + tau,

    whose slope lies in [tau, 1/eps + tau], so it satisfies the elliptic
    slope-band hypothesis whenever tau > 0.

    Duck-compatible with ``Nonlinearity`` (beta/dbeta/a/A/B/flux and the
    growth metadata), so solvers accept either.
    """

    def __init__(self, base, eps, tau=0.0, argtol=1e-10, cache_points=4096,
                 cache_t_max=1e6):
        if eps <= 0:
            raise ValueError("eps must be positive")
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        conv = validate_hypotheses(base, sample_count=64)["A-convex"]
        if not conv.passed:
            raise ValueError(
                f"bracketed minimization requires convex A; base fails near t={conv.first_violation}")
        self.base = base
        self.eps = float(eps)
        self.tau = float(tau)
        self.argtol = float(argtol)
        self.name = f"moreau_yosida({base.name},eps={eps:g},tau={tau:g})"
        self.p = base.p
        self.C1 = base.C1
        self.C2 = base.C2 + tau
        band_hi = 1.0 / self.eps + self.tau
        self.smooth_eps = min(self.tau, 1.0 / band_hi) if tau > 0 else None
        # Solvers evaluate beta/dbeta/B in hot loops; precompute them once
        # on a log grid (interpolation stays monotone, which is all the
        # accretivity and positivity structure needs).  prox/envelope keep
        # the exact bracketed-minimization path.
        tg = np.concatenate([[0.0], np.geomspace(1e-8, cache_t_max, cache_points)])
        P, val = self.prox(tg)
        safe = np.maximum(tg, TINY_T)
        self._tgrid = tg
        self._beta_vals = val / safe + self.tau * tg
        self._beta_vals[0] = 0.0
        # B is the exact antiderivative of the interpolated beta (piecewise
        # quadratic) and dbeta its exact derivative (the chord slopes), so
        # energy, gradient and Hessian describe one and the same convex
        # function to rounding error and Newton line searches do not stall.
        self._slopes = np.diff(self._beta_vals) / np.diff(tg)
        seg = 0.5 * (self._beta_vals[1:] + self._beta_vals[:-1]) * np.diff(tg)
        self._cumB = np.concatenate([[0.0], np.cumsum(seg)])
        self._tail_slope = float(self._slopes[-1])

    def prox(self, t):
        """Proximal point P_eps(t) and envelope value A_eps(t)."""
        t = _as_array(t)
        shape = t.shape
        flat = np.maximum(t.ravel(), 0.0)

        def objective(s):
            return 0.5 * (flat - s) ** 2 / self.eps + self.base.A(s)

        arg, val = _golden_min(objective, np.zeros_like(flat), flat, self.argtol)
        return arg.reshape(shape), val.reshape(shape)

    def envelope(self, t):
        """The Moreau envelope A_eps(t) alone."""
        return self.prox(t)[1]

    def envelope_slope(self, t):
        """d A_eps / dt = (t - P_eps(t)) / eps, exact given the prox point."""
        t = _as_array(t)
        return (t - self.prox(t)[0]) / self.eps

    def _interp(self, t, vals):
        t = _as_array(t)
        out = np.interp(t, self._tgrid, vals)
        t_max = self._tgrid[-1]
        over = t > t_max
        if np.any(over):
            out = np.where(over, vals[-1] + self._tail_slope * (t - t_max), out)
        return out

    def beta(self, t):
        return self._interp(t, self._beta_vals)

    def a(self, t):
        t = np.maximum(_as_array(t), TINY_T)
        return self.beta(t) / t

    def A(self, t):
        t = _as_array(t)
        return t * self.beta(t)

    def B(self, t):
        t = _as_array(t)
        ts, bs = self._tgrid, self._beta_vals
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2)
        d = np.clip(t - ts[idx], 0.0, None)
        out = self._cumB[idx] + bs[idx] * d + 0.5 * self._slopes[idx] * d ** 2
        over = t > ts[-1]
        if np.any(over):
            dd = np.where(over, t - ts[-1], 0.0)
            out = np.where(over, self._cumB[-1] + bs[-1] * dd
                           + 0.5 * self._tail_slope * dd ** 2, out)
        return out

    def dbeta(self, t):
        t = _as_array(t)
        idx = np.clip(np.searchsorted(self._tgrid, t, side="right") - 1,
                      0, len(self._slopes) - 1)
        return self._slopes[idx]

    def flux(self, g):
        g = _as_array(g)
        mag = np.sqrt((g ** 2).sum(axis=-1))
        coef = np.where(mag > 0, self.beta(np.maximum(mag, TINY_T)) / np.maximum(mag, TINY_T), 0.0)
        return coef[..., None] * g


def moreau_yosida(nl, eps, tau=0.0):
    """Regularize ``nl`` so its beta gains two-sided slope bounds."""
    return RegularizedNonlinearity(nl, eps, tau)
