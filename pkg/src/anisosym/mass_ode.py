"""Rearranged ODE system in the measure variable s.

The operator acting on mass functions U(s) = int_0^s u*(sigma) dsigma is

    (L U)(s) = kappa(s) * beta(-kappa(s) * U''(s)),

with U(0) = 0 and U'(L) = 0; kappa is the perimeter factor of the ball of
measure s.  Mass functions of the sliced solutions satisfy the coupled
system

    L U_j - (U_{j+1} - 2 U_j + U_{j-1})/h^2  <=  F_j     (subsolutions)

with equality for the symmetrized solutions, and the operator is
T-accretive in the sup norm: resolvents are order preserving and
non-expansive, which closes the slice-wise comparison through the positive
definiteness of the second-difference matrix D2 = C^t C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .rearrange import MassFunction, ScalarField, decreasing_rearrangement, mass_function


class ResolventError(RuntimeError):
    pass


def second_difference_matrix(N):
    """The N x N tridiagonal matrix with 2 on the diagonal and -1 off it."""
    D = 2 * np.eye(N, dtype=np.int64)
    idx = np.arange(N - 1)
    D[idx, idx + 1] = -1
    D[idx + 1, idx] = -1
    return D


def difference_factor(N):
    """(N+1) x N zero-padded difference matrix C with C^t C = D2 exactly.

    Row i of C maps x to x_i - x_{i-1} with x_{-1} = x_N = 0 read as zeros,
    so x^t D2 x = |C x|^2; the factorization is exact in integer arithmetic.
    """
    C = np.zeros((N + 1, N), dtype=np.int64)
    idx = np.arange(N)
    C[idx, idx] = 1
    C[idx[1:], idx[:-1]] = -1
    C[N, N - 1] = -1
    return C


def _odd_beta(nl, t):
    """Monotone odd extension of beta, for transient Newton states only."""
    return np.sign(t) * nl.beta(np.abs(t))


class MassOperator:
    """kappa(s) beta(-kappa(s) U'') on a radial grid with U(0)=0, U'(L)=0.

    Second differences use the 3-point stencil on the (possibly graded)
    nodes; the Neumann end is a ghost node mirrored about s = L, matching
    the even extension used to analyze the operator.  Node 0 carries only
    the Dirichlet condition and never an equation (kappa may vanish there).
    """

    def __init__(self, s_grid, nl):
        self.s_grid = s_grid
        self.nl = nl
        s = s_grid.s_nodes
        M = s_grid.num_intervals
        cm = np.empty(M)
        cc = np.empty(M)
        cp = np.empty(M)
        dsm = s[1:M] - s[0:M - 1]
        dsp = s[2:M + 1] - s[1:M]
        cm[:M - 1] = 2.0 / (dsm * (dsm + dsp))
        cp[:M - 1] = 2.0 / (dsp * (dsm + dsp))
        cc[:M - 1] = -2.0 / (dsm * dsp)
        dlast = s[M] - s[M - 1]
        cm[M - 1] = 2.0 / dlast ** 2
        cc[M - 1] = -2.0 / dlast ** 2
        cp[M - 1] = 0.0
        self._cm, self._cc, self._cp = cm, cc, cp
        self.kappa = s_grid.kappa[1:]
        self.M = M

    def second_difference(self, U):
        """D2 U at nodes 1..M; accepts (M+1,) or batched (..., M+1) arrays."""
        U = np.asarray(U, dtype=float)
        M = self.M
        pad = np.concatenate([U, np.zeros(U.shape[:-1] + (1,))], axis=-1)
        return (self._cm * U[..., 0:M] + self._cc * U[..., 1:M + 1]
                + self._cp * pad[..., 2:M + 2])

    def apply(self, U, check_concavity=True, concavity_tol=1e-10):
        """Operator values at nodes 1..M for a concave mass function."""
        d2 = self.second_difference(U)
        if check_concavity and np.max(d2) > concavity_tol:
            raise ValueError(
                f"second difference reaches {np.max(d2):.3e} > {concavity_tol:.1e}; "
                "input is not (discretely) concave")
        t = np.clip(-self.kappa * d2, 0.0, None)
        return self.kappa * self.nl.beta(t)

    def _apply_odd(self, U):
        t = -self.kappa * self.second_difference(U)
        return self.kappa * _odd_beta(self.nl, t)

    def resolvent(self, lam, G, tol=1e-11, max_iter=80):
        """Solve U + lam * (L U) = G with U(0) = 0 and U'(L) = 0.

        Newton iteration on the grid values; the monotone beta makes the
        Jacobian an M-matrix, solved in banded form.  The law must provide
        ``dbeta`` with finite values (regularize degenerate laws first).
        """
        if lam <= 0:
            raise ValueError("lam must be positive")
        if getattr(self.nl, "dbeta", None) is None:
            raise ResolventError("resolvent Newton needs dbeta; regularize the law")
        G = np.asarray(G, dtype=float)
        M = self.M
        U = np.concatenate([[0.0], G[1:]])
        scale = max(1.0, float(np.max(np.abs(G))))

        def residual(U):
            return U[1:] + lam * self._apply_odd(U) - G[1:]

        r = residual(U)
        for _ in range(max_iter):
            if np.max(np.abs(r)) <= tol * scale:
                return U
            t = -self.kappa * self.second_difference(U)
            w = lam * self.kappa ** 2 * self.nl.dbeta(np.abs(t))
            if not np.all(np.isfinite(w)):
                raise ResolventError("beta slope degenerate along the iterate; regularize")
            # Banded Jacobian: rows i = 1..M, unknowns U_1..U_M.
            ab = np.zeros((3, M))
            ab[1] = 1.0 - w * self._cc
            ab[0, 1:] = -(w * self._cp)[:-1]        # super-diagonal
            ab[2, :-1] = -(w * self._cm)[1:]        # sub-diagonal
            step = solve_banded((1, 1), ab, -r)
            alpha = 1.0
            for _ in range(40):
                U_try = U.copy()
                U_try[1:] += alpha * step
                r_try = residual(U_try)
                if np.max(np.abs(r_try)) <= (1.0 - 0.25 * alpha) * np.max(np.abs(r)):
                    break
                alpha *= 0.5
            else:
                raise ResolventError("resolvent Newton stalled; regularize the law")
            U, r = U_try, r_try
        raise ResolventError(f"resolvent Newton did not converge (residual {np.max(np.abs(r)):.3e})")


@dataclass
class AccretivityReport:
    trials: int
    lambdas: tuple
    worst_margin: float
    violations: int
    tolerance: float

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"trials": self.trials, "lambdas": list(self.lambdas),
                "worst_margin": self.worst_margin, "violations": self.violations,
                "tolerance": self.tolerance, "passed": self.passed}


def random_mass_functions(op, count, rng, scale=1.0):
    """Random members of the operator domain, batched as (count, M+1).

    Profiles are cumulative sums of nonnegative decrements that vanish on
    the last two nodes, so the trapezoid integrals have zero one-sided
    slope at s = L; the integrals are then concave, increasing, and zero
    at the origin.
    """
    s = op.s_grid.s_nodes
    dec = rng.exponential(scale=scale, size=(count, len(s)))
    dec[:, -2:] = 0.0
    w = np.cumsum(dec[:, ::-1], axis=1)[:, ::-1]
    seg = 0.5 * (w[:, 1:] + w[:, :-1]) * np.diff(s)
    return np.concatenate([np.zeros((count, 1)), np.cumsum(seg, axis=1)], axis=1)


def t_accretivity_check(op, trials=1000, lambdas=(0.01, 1.0, 100.0),
                        rng=None, tolerance=1e-9):
    """Check the sup-norm accretivity inequality on random domain pairs.

    For mass functions U, V and every lambda > 0 the positive parts must
    satisfy  max (U-V)_+  <=  max (U - V + lambda (L U - L V))_+ ; the
    report carries the worst margin (right side minus left side) seen.
    """
    rng = rng or np.random.default_rng(0)
    U = random_mass_functions(op, trials, rng)
    V = random_mass_functions(op, trials, rng)
    AU = op.apply(U, check_concavity=False)
    AV = op.apply(V, check_concavity=False)
    D = U[:, 1:] - V[:, 1:]
    lhs = np.max(np.clip(D, 0.0, None), axis=1)
    worst = np.inf
    violations = 0
    for lam in lambdas:
        rhs = np.max(np.clip(D + lam * (AU - AV), 0.0, None), axis=1)
        margins = rhs - lhs
        worst = min(worst, float(margins.min()))
        violations += int(np.sum(margins < -tolerance))
    return AccretivityReport(trials, tuple(lambdas), worst, violations, tolerance)


def mass_functions_from_stack(stack, s_grid):
    """Mass functions of every slice (zero functions at the boundaries)."""
    out = []
    zero = MassFunction(s_grid, np.zeros_like(s_grid.s_nodes))
    for j in range(stack.values.shape[0]):
        if j == 0 or j == stack.values.shape[0] - 1:
            out.append(zero)
        else:
            prof = decreasing_rearrangement(ScalarField(stack.grid, stack.values[j]), s_grid)
            out.append(mass_function(prof))
    return out


@dataclass(eq=False)
class MassSystem:
    """The coupled rearranged system: N equations tied by second differences.

    ``F`` holds the interior data mass functions F_1..F_N (non-decreasing,
    concave, vanishing at 0).
    """

    op: MassOperator
    h: float
    F: list

    def __post_init__(self):
        for j, Fj in enumerate(self.F, start=1):
            v = Fj.values if isinstance(Fj, MassFunction) else np.asarray(Fj, float)
            if v[0] != 0.0 or np.any(np.diff(v) < -1e-12 * max(1.0, v.max())):
                raise ValueError(f"F_{j} must be non-decreasing with F(0) = 0")

    @property
    def num_interior(self):
        return len(self.F)

    def _F_arrays(self):
        return [Fj.values if isinstance(Fj, MassFunction) else np.asarray(Fj, float)
                for Fj in self.F]


def solve_mass_system(sys, tol=1e-10, max_sweeps=50000, init=None):
    """Gauss-Seidel over the slices with the resolvent as the inner solve.

    Each sweep solves  V_j + (h^2/2) L V_j = (h^2/2) F_j + (V_{j-1}+V_{j+1})/2
    for j = 1..N; the iteration stops when the full-system residual drops
    below ``tol`` (times the data scale).  ``init`` may carry warm-start
    values (arrays or MassFunctions) for the interior slices.
    """
    op, h, N = sys.op, sys.h, sys.num_interior
    lam = h ** 2 / 2.0
    Fs = sys._F_arrays()
    M1 = len(op.s_grid.s_nodes)
    V = np.zeros((N + 2, M1))
    if init is not None:
        for j in range(1, N + 1):
            src = init[j - 1]
            V[j] = src.values if isinstance(src, MassFunction) else np.asarray(src, float)
    scale = max(1.0, max(float(np.max(np.abs(F))) for F in Fs))
    for _ in range(max_sweeps):
        for j in range(1, N + 1):
            G = lam * Fs[j - 1] + 0.5 * (V[j - 1] + V[j + 1])
            V[j] = op.resolvent(lam, G, tol=min(tol, 1e-11))
        res = 0.0
        for j in range(1, N + 1):
            eq = V[j, 1:] + lam * op._apply_odd(V[j]) \
                - lam * Fs[j - 1][1:] - 0.5 * (V[j - 1, 1:] + V[j + 1, 1:])
            res = max(res, float(np.max(np.abs(eq))))
        if res <= tol * scale:
            return [V[j] for j in range(N + 2)]
    raise ResolventError(
        f"slice sweeps did not contract below {tol:g} (residual {res:.3e}); "
        "this usually indicates inconsistent data")


def subsolution_slack(U_list, F_list, op, h):
    """Per-node slack  F_j - L U_j + (U_{j+1} - 2U_j + U_{j-1})/h^2.

    Nonnegative for exact subsolutions; mass functions built from solved
    stacks satisfy it up to discretization error.  Rows cover the interior
    slices, columns the nodes s_1..s_M.

    Differencing U twice resolves the kinks of the cell-wise profile, so
    the radial grid should be coarser than the cell measure (two or more
    cells per s-interval); aligned grids alias the interleaved level-set
    branches of unimodal slices into slope oscillations.
    """
    N = len(U_list) - 2
    arrays = [u.values if isinstance(u, MassFunction) else np.asarray(u, float)
              for u in U_list]
    Fs = [f.values if isinstance(f, MassFunction) else np.asarray(f, float)
          for f in F_list]
    out = np.empty((N, op.M))
    for j in range(1, N + 1):
        ydiff = (arrays[j + 1][1:] - 2.0 * arrays[j][1:] + arrays[j - 1][1:]) / h ** 2
        out[j - 1] = Fs[j - 1][1:] - op.apply(arrays[j], check_concavity=False) + ydiff
    return out
