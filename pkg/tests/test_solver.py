import numpy as np
import pytest

from anisosym import (DiscreteProblem, make_ball_grid, make_disk_grid,
                      make_interval_grid, make_p_laplacian, moreau_yosida,
                      residual_norm, sample_slices, solve_cross_section,
                      solve_stack, solve_symmetrized, solve_tau_extrapolated,
                      stack_energy, steiner_rearrangement, y_interpolant,
                      zero_stack)
from anisosym.grids import SliceStack


def separable_exact(x, y):
    # -u_xx - u_yy = 2 pi^2 sin(pi x) solved on the unit square
    return np.sin(np.pi * x) * 2.0 * (1 - np.cosh(np.pi * (y - 0.5)) / np.cosh(np.pi / 2))


def separable_data(c, y):
    return 2.0 * np.pi ** 2 * np.sin(np.pi * c[:, 0])


def test_summation_by_parts_identity():
    # sum_j (-u_{j+1} + 2u_j - u_{j-1}) phi_j = sum_{j=0..N} (u_{j+1}-u_j)(phi_{j+1}-phi_j)
    rng = np.random.default_rng(2)
    N = 9
    u = np.zeros((N + 2, 5))
    phi = np.zeros((N + 2, 5))
    u[1:-1] = rng.normal(size=(N, 5))
    phi[1:-1] = rng.normal(size=(N, 5))
    lhs = np.sum((-u[2:] + 2 * u[1:-1] - u[:-2]) * phi[1:-1])
    rhs = np.sum((u[1:] - u[:-1]) * (phi[1:] - phi[:-1]))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_energy_zero_stack_vanishes():
    g = make_interval_grid(1.0, 8)
    f = sample_slices(g, 3, lambda c, y: np.ones(c.shape[0]))
    prob = DiscreteProblem(g, make_p_laplacian(2), f)
    assert stack_energy(prob, zero_stack(g, 3)) == 0.0


def test_energy_positive_without_data():
    g = make_interval_grid(1.0, 8)
    prob = DiscreteProblem(g, make_p_laplacian(2), zero_stack(g, 3))
    st = zero_stack(g, 3)
    st.values[1:-1] = 0.3
    assert stack_energy(prob, st) > 0


def test_energy_matches_hand_sum():
    # N = 1, p = 2, four cells on (0, 1): every face and load term written out.
    g = make_interval_grid(1.0, 4)
    dx = 0.25
    u = np.array([0.2, 0.5, 0.1, 0.3])
    fv = np.array([1.0, 2.0, 0.5, 0.25])
    f = zero_stack(g, 1)
    f.values[1] = fv
    prob = DiscreteProblem(g, make_p_laplacian(2), f)
    st = zero_stack(g, 1)
    st.values[1] = u
    # gradient part: P1 elements on nodes {0, dx/2, 3dx/2, 5dx/2, 7dx/2, 1}
    faces = [(u[0] - 0.0, dx / 2), (u[1] - u[0], dx), (u[2] - u[1], dx),
             (u[3] - u[2], dx), (0.0 - u[3], dx / 2)]
    grad_term = sum(0.5 * (d / L) ** 2 * L for d, L in faces)
    # y part: h = 1/2, both boundary gaps, with the 1/2 energy factor
    h = 0.5
    y_term = 0.5 * dx * sum(2.0 * (u[i] / h) ** 2 for i in range(4))
    load = dx * float(fv @ u)
    assert stack_energy(prob, st) == pytest.approx(grad_term + y_term - load, rel=1e-12)


def test_zero_data_gives_zero_solution():
    g = make_interval_grid(1.0, 16)
    prob = DiscreteProblem(g, make_p_laplacian(2), zero_stack(g, 3))
    sol = solve_stack(prob)
    assert sol.energy == 0.0
    assert np.all(sol.stack.values == 0.0)


def test_separable_oracle_and_convergence_rate():
    errs = []
    for m, N in ((32, 15), (64, 31)):
        g = make_interval_grid(1.0, m)
        f = sample_slices(g, N, separable_data)
        sol = solve_stack(DiscreteProblem(g, make_p_laplacian(2), f))
        it = y_interpolant(sol)
        worst = 0.0
        for y in np.linspace(0, 1, 4 * (N + 1) + 1):
            worst = max(worst, float(np.abs(it(y) - separable_exact(g.centers[:, 0], y)).max()))
        errs.append(worst)
    rate = np.log2(errs[0] / errs[1])
    assert errs[1] < 3e-3
    assert rate >= 1.8


def test_positivity_of_solutions():
    rng = np.random.default_rng(8)
    g = make_interval_grid(1.0, 32)
    for p in (2, 3):
        nl = make_p_laplacian(p) if p == 2 else moreau_yosida(make_p_laplacian(p), 1e-6, 1e-6)
        f = zero_stack(g, 4)
        f.values[1:-1] = rng.uniform(0, 1, (4, 32))
        sol = solve_stack(DiscreteProblem(g, nl, f))
        assert sol.stack.values.min() >= -1e-12


def test_comparison_in_data():
    rng = np.random.default_rng(13)
    g = make_interval_grid(1.0, 24)
    nl = moreau_yosida(make_p_laplacian(3), 1e-6, 1e-6)
    for _ in range(5):
        base = rng.uniform(0, 1, (3, 24))
        extra = rng.uniform(0, 1, (3, 24))
        f = zero_stack(g, 3); f.values[1:-1] = base
        gdat = zero_stack(g, 3); gdat.values[1:-1] = base + extra
        uf = solve_stack(DiscreteProblem(g, nl, f)).stack.values
        ug = solve_stack(DiscreteProblem(g, nl, gdat)).stack.values
        assert np.min(ug - uf) >= -1e-9


def test_energy_descent_along_iterates():
    g = make_interval_grid(1.0, 48)
    nl = moreau_yosida(make_p_laplacian(3), 1e-6, 1e-6)
    f = sample_slices(g, 5, lambda c, y: np.exp(-40 * (c[:, 0] - 0.4) ** 2))
    sol = solve_stack(DiscreteProblem(g, nl, f))
    hist = np.array(sol.energies)
    assert np.all(np.diff(hist) <= 1e-12)
    assert sol.energy <= 0.0


def test_solver_requires_slope_bounds():
    g = make_interval_grid(1.0, 8)
    f = sample_slices(g, 2, lambda c, y: np.ones(c.shape[0]))
    with pytest.raises(ValueError, match="moreau_yosida"):
        solve_stack(DiscreteProblem(g, make_p_laplacian(3), f))


def test_x_only_scaling_homogeneity():
    # -div(|u'|^{p-2} u') = f scales u by 2 when f scales by 2^{p-1}
    g = make_interval_grid(1.0, 48)
    nl = moreau_yosida(make_p_laplacian(3), 1e-10, 1e-9)
    fv = np.exp(-30 * (g.centers[:, 0] - 0.45) ** 2)
    u1, _ = solve_cross_section(g, nl, fv)
    u2, _ = solve_cross_section(g, nl, 4.0 * fv)
    assert np.max(np.abs(u2 - 2.0 * u1)) <= 1e-5 * np.max(u1)


def test_residual_norm_small_at_solution():
    g = make_interval_grid(1.0, 16)
    f = sample_slices(g, 3, lambda c, y: np.ones(c.shape[0]))
    prob = DiscreteProblem(g, make_p_laplacian(2), f)
    sol = solve_stack(prob)
    assert residual_norm(prob, sol.stack) < 1e-9
    assert residual_norm(prob, zero_stack(g, 3)) > 1e-3


def test_data_must_be_nonnegative():
    g = make_interval_grid(1.0, 8)
    f = zero_stack(g, 2)
    f.values[1] = -1.0
    with pytest.raises(ValueError, match="nonnegative"):
        DiscreteProblem(g, make_p_laplacian(2), f)


def test_symmetric_data_gives_symmetric_solution():
    g = make_ball_grid(1, 1.0, 32)
    nl = make_p_laplacian(2)
    f = sample_slices(g, 3, lambda c, y: np.exp(-10 * c[:, 0] ** 2))
    sol = solve_symmetrized(DiscreteProblem(g, nl, f))
    v = sol.stack.values[2]
    assert np.max(np.abs(v - v[::-1])) < 1e-12


def test_symmetrized_solver_rejects_unordered_data():
    g = make_ball_grid(1, 1.0, 16)
    f = zero_stack(g, 2)
    f.values[1] = np.linspace(0, 1, 16)        # increasing toward the wall
    with pytest.raises(ValueError, match="Schwarz"):
        solve_symmetrized(DiscreteProblem(g, make_p_laplacian(2), f))


def test_symmetrized_solver_requires_centered_ball():
    g = make_interval_grid(1.0, 16)            # (0, 1), not centered
    f = sample_slices(g, 2, lambda c, y: np.ones(c.shape[0]))
    with pytest.raises(ValueError, match="centered"):
        solve_symmetrized(DiscreteProblem(g, make_p_laplacian(2), f))


def test_disk_radial_monotonicity_check_passes():
    g = make_disk_grid(1.0, 24)
    nl = make_p_laplacian(2)
    f = sample_slices(g, 2, lambda c, y: np.ones(c.shape[0]))
    f2 = steiner_rearrangement(f, g)
    sol = solve_symmetrized(DiscreteProblem(g, nl, f2))
    assert sol.stack.values.min() >= -1e-12


def test_interpolant_nodes_and_midpoints():
    g = make_interval_grid(1.0, 8)
    st = zero_stack(g, 3)
    rng = np.random.default_rng(4)
    st.values[1:-1] = rng.uniform(0, 1, (3, 8))
    it = y_interpolant(st)
    h = st.h
    for j in range(5):
        assert np.allclose(it(j * h), st.values[j])
    mid = it(1.5 * h)
    assert np.allclose(mid, 0.5 * (st.values[1] + st.values[2]))
    with pytest.raises(ValueError):
        it(1.2)


def test_interpolant_reproduces_linear_stacks():
    g = make_interval_grid(1.0, 6)
    N = 4
    vals = np.zeros((N + 2, 6))
    for j in range(N + 2):
        y = j / (N + 1)
        vals[j] = y * (1 - y) * 0.0            # placeholder, filled next
    # linear in j requires zero boundaries only in the test below via hat profile
    vals = np.zeros((N + 2, 6))
    slope = np.arange(6, dtype=float)
    for j in range(1, N + 1):
        vals[j] = j * slope
    vals[N + 1] = 0.0
    st = SliceStack(g, vals)
    it = y_interpolant(st)
    h = st.h
    for y in (0.3 * h, 1.7 * h, 2.25 * h):
        j = int(y / h)
        expect = (vals[j] * (1 - (y / h - j)) + vals[j + 1] * (y / h - j))
        assert np.allclose(it(y), expect)


def test_interpolant_l1_distance_exact():
    g = make_interval_grid(1.0, 4)
    a = zero_stack(g, 1)
    a.values[1] = 1.0                        # hat in y with peak 1 at y = 1/2
    b = zero_stack(g, 1)
    it_a, it_b = y_interpolant(a), y_interpolant(b)
    # integral over y of the hat is 1/2, times |domain| = 1
    assert it_a.l1_distance(it_b) == pytest.approx(0.5)


def test_h1_norm_of_hat_stack():
    g = make_interval_grid(1.0, 64)
    a = zero_stack(g, 1)
    a.values[1] = np.sin(np.pi * g.centers[:, 0])
    # u^h = sin(pi x) * hat(y): int |d_y u|^2 = int sin^2 * int hat'^2 = 1/2 * 4;
    # int |d_x u|^2 = pi^2/2 * int hat^2 = pi^2/2 * 1/3
    h1 = y_interpolant(a).h1_norm_sq()
    expect = 2.0 + np.pi ** 2 / 6.0
    assert h1 == pytest.approx(expect, rel=0.01)


def test_tau_extrapolation_improves_on_plain_shift():
    g = make_interval_grid(1.0, 32)
    base = make_p_laplacian(3)
    f = sample_slices(g, 3, lambda c, y: np.exp(-20 * (c[:, 0] - 0.5) ** 2))
    extrap, sol_a, sol_b = solve_tau_extrapolated(g, base, f, eps=1e-8, tau=1e-2)
    ref = solve_stack(DiscreteProblem(g, moreau_yosida(base, 1e-8, 1e-5), f)).stack
    err_plain = np.abs(sol_b.stack.values - ref.values).max()
    err_extrap = np.abs(extrap.values - ref.values).max()
    assert err_extrap < err_plain


def test_solution_energy_not_above_zero_stack():
    rng = np.random.default_rng(21)
    g = make_interval_grid(1.0, 16)
    f = zero_stack(g, 3)
    f.values[1:-1] = rng.uniform(0, 2, (3, 16))
    sol = solve_stack(DiscreteProblem(g, make_p_laplacian(2), f))
    assert sol.energy <= 0.0
