import numpy as np
import pytest
from scipy.optimize import minimize, root

from gap_afem.assembly import (
    assemble_load,
    assemble_mass,
    assemble_mixed_rt0,
    assemble_plus_term,
    assemble_stiffness,
    restrict,
)
from gap_afem.estimators import rt0_l2_norm
from gap_afem.fem_spaces import (
    P0Field,
    S1Field,
    evaluate,
    integrate,
    interpolate_s1,
    l2_norm,
)
from gap_afem.mesh import DomainSpec, create_domain, refine, refine_uniform
from gap_afem.problems import (
    MembraneProblem,
    ObstacleProblem,
    ParaboloidObstacle,
    ThermoformingProblem,
)
from gap_afem.solvers import (
    NewtonConvergenceError,
    _divergence_defect,
    reconstruct_dual,
    semismooth_newton,
    solve_obstacle,
)


BUMP = ObstacleProblem(DomainSpec('unit_square', 3),
                       ParaboloidObstacle(0.3, 2.0), -5.0)


def test_zero_obstacle_solution():
    problem = ObstacleProblem()
    mesh = problem.initial_mesh()
    state = problem.solve(mesh, 100.0)

    np.testing.assert_array_equal(state.y.values, 0.0)
    assert state.newton_iterations == 1
    assert state.residual == 0.0


def test_obstacle_must_be_negative_on_boundary():
    mesh = create_domain(DomainSpec('unit_square', 2))
    with pytest.raises(ValueError):
        solve_obstacle(mesh, interpolate_s1(mesh, 0.0),
                       P0Field(mesh, np.zeros(mesh.n_triangles)), 10.0)
    with pytest.raises(ValueError):
        solve_obstacle(mesh, interpolate_s1(mesh, -1.0),
                       P0Field(mesh, np.zeros(mesh.n_triangles)), 0.0)


def test_obstacle_matches_dense_minimizer():
    mesh = BUMP.initial_mesh()
    gamma = 100.0
    psi, f = BUMP.discretize(mesh)
    free = mesh.free_vertices
    assert free.size <= 50

    stiffness = assemble_stiffness(mesh, dirichlet=True).toarray()
    load = assemble_load(mesh, f)[free]
    psi_q = evaluate(psi, mesh)

    def energy(x):
        y_q = evaluate(S1Field.from_free(mesh, x), mesh)
        return 0.5 * x @ stiffness @ x - load @ x + 0.5 * gamma * integrate(
            mesh, np.maximum(psi_q - y_q, 0.0) ** 2)

    def gradient(x):
        y = S1Field.from_free(mesh, x)
        penalty, _ = assemble_plus_term(
            mesh, S1Field(mesh, psi.values - y.values), gamma)
        return stiffness @ x - load - penalty[free]

    def hessian(x):
        y = S1Field.from_free(mesh, x)
        _, jacobian = assemble_plus_term(
            mesh, S1Field(mesh, psi.values - y.values), gamma)
        return stiffness + restrict(jacobian, free).toarray()

    first = minimize(energy, np.zeros(free.size), jac=gradient,
                     method='BFGS', options={'gtol': 1e-10})
    polished = root(gradient, first.x, jac=hessian, tol=1e-14)

    state = BUMP.solve(mesh, gamma)
    np.testing.assert_allclose(state.y.values[free], polished.x, atol=1e-8)
    assert energy(state.y.values[free]) <= energy(first.x) + 1e-12
    # The obstacle is active somewhere
    assert np.any(psi.values > state.y.values)


def test_obstacle_warm_start_on_refined_mesh():
    mesh = BUMP.initial_mesh()
    coarse = BUMP.solve(mesh, 1000.0)
    fine_mesh = refine(mesh, range(0, mesh.n_triangles, 3))

    cold = BUMP.solve(fine_mesh, 1000.0)
    warm = BUMP.solve(fine_mesh, 1000.0, initial=coarse)
    np.testing.assert_allclose(warm.y.values, cold.y.values, atol=1e-7)

    again = BUMP.solve(fine_mesh, 1000.0, initial=warm)
    assert again.newton_iterations == 1


def test_obstacle_iteration_cap():
    mesh = BUMP.initial_mesh()
    with pytest.raises(NewtonConvergenceError) as error:
        BUMP.solve(mesh, 1e4, max_iterations=1)
    assert error.value.iterations == 1
    assert error.value.residual > 0


def test_semismooth_newton_on_scalar_equation():
    # x + max(x, 0) = 3 has the root x = 1.5
    def system(x):
        active = float(x[0] > 0)
        return (np.array([x[0] + max(x[0], 0.0) - 3.0]),
                np.array([[1.0 + active]]), 3.0)

    def direction(x, residual, jacobian):
        return np.linalg.solve(jacobian, -residual)

    x, iterations, residual = semismooth_newton(
        system, direction, np.array([-1.0]), 1e-12, 10)
    assert x[0] == pytest.approx(1.5)
    assert iterations == 3
    assert residual <= 1e-12


def test_obstacle_violation_decreases_with_gamma():
    mesh = BUMP.initial_mesh()
    psi, _ = BUMP.discretize(mesh)
    violations = []
    state = None
    for gamma in [1e1, 1e2, 1e3, 1e4, 1e5]:
        state = BUMP.solve(mesh, gamma, initial=state)
        violations.append(l2_norm(mesh, np.maximum(
            evaluate(psi, mesh) - evaluate(state.y, mesh), 0.0)))

    assert all(later <= earlier + 1e-12
               for earlier, later in zip(violations, violations[1:]))
    assert violations[-1] < 1e-3 * violations[0]


def test_membrane_matches_bordered_oracle_without_contact():
    problem = MembraneProblem(DomainSpec('unit_square', 3), alpha=2.0,
                              f_const_1=-10.0, f_const_2=10.0)
    mesh = problem.initial_mesh()
    state = problem.solve(mesh, 100.0)

    free = mesh.free_vertices
    operator = (assemble_stiffness(mesh) - 2.0 * assemble_mass(mesh)) \
        .toarray()[np.ix_(free, free)]
    volume = assemble_load(mesh, 1.0)[free]
    load = assemble_load(mesh, 10.0)[free]
    dense = np.block([[operator, volume[:, None]],
                      [volume[None, :], np.zeros((1, 1))]])
    oracle = np.linalg.solve(dense, np.append(load, 1.0))

    assert np.all(oracle[:-1] >= 0)
    np.testing.assert_allclose(state.delta.values[free], oracle[:-1],
                               atol=1e-8)
    assert state.mu == pytest.approx(oracle[-1])
    assert integrate(mesh, state.delta) == pytest.approx(1.0)
    assert state.constraint_violation() <= 1e-12


def test_membrane_reconstruction_and_violation_decrease():
    problem = MembraneProblem.l_shape_benchmark()
    mesh = problem.initial_mesh()
    violations = []
    state = None
    for gamma in [1e2, 1e3, 1e4, 1e5, 1e6]:
        state = problem.solve(mesh, gamma, initial=state)
        np.testing.assert_allclose(state.u1.values + state.u2.values,
                                   2.0 * state.m.values, atol=1e-10)
        np.testing.assert_allclose(state.u2.values - state.u1.values,
                                   2.0 * state.delta.values, atol=1e-10)
        violations.append(state.constraint_violation())

    assert violations[0] > 0
    assert all(later <= earlier + 1e-12
               for earlier, later in zip(violations, violations[1:]))
    assert violations[-1] < 1e-3 * violations[0]


def test_thermoforming_heat_balance_and_restart():
    problem = ThermoformingProblem(DomainSpec('unit_square', 2), k=10.0)
    mesh = problem.initial_mesh()
    state = problem.solve(mesh, 100.0)

    assert state.residual <= 1e-9
    assert state.newton_iterations > 1
    # Testing the heat equation with 1: k int T = int g(Phi0 + L T - u)
    params = state.params
    gap = evaluate(state.u, mesh) - evaluate(params.phi0, mesh) - \
        evaluate(params.lmult, mesh) * evaluate(state.T, mesh)
    assert params.k * integrate(mesh, state.T) == pytest.approx(
        integrate(mesh, params.g(-gap)), abs=1e-7)
    # The membrane touches the mould
    assert np.any(state.gap() > 0)

    again = problem.solve(mesh, 100.0, initial=state)
    assert again.newton_iterations == 1


@pytest.mark.parametrize('kind', ['unit_square', 'l_shape', 'slit'])
def test_reconstructed_flux_divergence(kind):
    mesh = create_domain(DomainSpec(kind, 1))
    rng = np.random.default_rng(3)
    rhs = rng.standard_normal(mesh.n_triangles)

    flux = reconstruct_dual(mesh, rhs)
    divergence = flux.values[mesh.triangle_edges] * mesh.edge_signs * \
        mesh.edge_lengths[mesh.triangle_edges]
    np.testing.assert_allclose(-divergence.sum(axis=1) / mesh.areas, rhs,
                               atol=1e-10)


def test_reconstructed_flux_on_graded_mesh():
    mesh = create_domain(DomainSpec('unit_square', 2))
    corner = 0
    assert np.all(mesh.vertices[corner] == 0.0)
    for _ in range(20):
        mesh = refine(mesh, np.flatnonzero(
            (mesh.triangles == corner).any(axis=1)))
    assert mesh.areas.min() < 1e-12

    rhs = np.full(mesh.n_triangles, 1000.0)
    flux = reconstruct_dual(mesh, rhs)
    divergence = flux.values[mesh.triangle_edges] * mesh.edge_signs * \
        mesh.edge_lengths[mesh.triangle_edges]
    defect = np.abs(divergence.sum(axis=1) + mesh.areas * rhs)
    assert defect.max() < 1e-9

    # A flux violating the balance on one tiny triangle is still caught
    tiny = int(np.argmin(mesh.areas))
    perturbed = flux.values.copy()
    perturbed[mesh.triangle_edges[tiny, 0]] += 1.0
    assembled, bound = _divergence_defect(
        assemble_mixed_rt0(mesh)[1], perturbed, mesh.areas * rhs)
    assert assembled[tiny] > bound[tiny]


def test_neumann_flux_has_no_boundary_flux():
    mesh = create_domain(DomainSpec('l_shape', 1))
    rng = np.random.default_rng(4)
    rhs = rng.standard_normal(mesh.n_triangles)
    rhs -= (mesh.areas @ rhs) / mesh.areas.sum()

    flux = reconstruct_dual(mesh, P0Field(mesh, rhs), neumann=True)
    np.testing.assert_array_equal(flux.values[mesh.boundary_edges], 0.0)
    divergence = flux.values[mesh.triangle_edges] * mesh.edge_signs * \
        mesh.edge_lengths[mesh.triangle_edges]
    np.testing.assert_allclose(-divergence.sum(axis=1) / mesh.areas, rhs,
                               atol=1e-10)


def test_reconstruct_dual_checks_length():
    mesh = create_domain(DomainSpec('unit_square', 1))
    with pytest.raises(ValueError):
        reconstruct_dual(mesh, np.zeros(mesh.n_triangles + 1))


def test_reconstructed_flux_energy_decreases_under_refinement():
    # For -Laplace y = 1 on the unit square, int |grad y|^2 = int y
    limit = 0.5 * 0.0351442537
    mesh = create_domain(DomainSpec('unit_square', 1))
    energies = []
    for _ in range(4):
        flux = reconstruct_dual(mesh, np.ones(mesh.n_triangles))
        energies.append(0.5 * rt0_l2_norm(flux) ** 2)
        mesh = refine_uniform(mesh)

    assert all(energy >= limit for energy in energies)
    assert all(later < earlier
               for earlier, later in zip(energies, energies[1:]))
    assert energies[-1] - limit < 0.25 * (energies[0] - limit)


def _mould_contact(mesh, params, gamma, temperature, start):
    """Return the free membrane values for a fixed temperature."""
    free = mesh.free_vertices
    stiffness = assemble_stiffness(mesh, dirichlet=True).toarray()
    load = assemble_load(mesh, params.f)[free]
    mould = evaluate(params.phi0, mesh) + evaluate(params.lmult, mesh) * \
        evaluate(S1Field(mesh, temperature), mesh)

    def system(x):
        gap = evaluate(S1Field.from_free(mesh, x), mesh) - mould
        penalty, jacobian = assemble_plus_term(mesh, gap, gamma)
        residual = stiffness @ x + penalty[free] - load
        return (residual, stiffness + restrict(jacobian, free).toarray(),
                np.linalg.norm(load))

    def direction(x, residual, jacobian):
        return np.linalg.solve(jacobian, -residual)

    x, _, _ = semismooth_newton(system, direction, start, 1e-12, 50)
    return x


def test_constant_heat_source_decouples_temperature():
    problem = ThermoformingProblem(DomainSpec('unit_square', 2), k=2.0,
                                   g_scale=3.0, g_rate=0.0, lmult=0.0)
    mesh = problem.initial_mesh()
    state = problem.solve(mesh, 100.0)

    # k T = g_scale / 2 with insulated boundary
    np.testing.assert_allclose(state.T.values, 0.75, atol=1e-7)
    free = mesh.free_vertices
    expected = _mould_contact(mesh, problem.discretize(mesh), 100.0,
                              np.zeros(mesh.n_vertices), np.zeros(free.size))
    np.testing.assert_allclose(state.u.values[free], expected, atol=1e-7)
    assert np.any(state.gap() > 0)


def test_thermoforming_matches_fixed_point_iteration():
    problem = ThermoformingProblem(DomainSpec('unit_square', 2), k=10.0)
    mesh = problem.initial_mesh()
    params = problem.discretize(mesh)
    gamma = 100.0
    operator = (params.k * assemble_mass(mesh) +
                assemble_stiffness(mesh)).toarray()
    mould = evaluate(params.phi0, mesh)
    lmult = evaluate(params.lmult, mesh)

    # Alternate membrane and damped temperature solves until stagnation
    u_free = np.zeros(mesh.free_vertices.size)
    temperature = np.zeros(mesh.n_vertices)
    for _ in range(200):
        u_free = _mould_contact(mesh, params, gamma, temperature, u_free)
        gap = evaluate(S1Field.from_free(mesh, u_free), mesh) - mould - \
            lmult * evaluate(S1Field(mesh, temperature), mesh)
        update = np.linalg.solve(operator,
                                 assemble_load(mesh, params.g(-gap)))
        change = np.abs(update - temperature).max()
        temperature = 0.5 * (temperature + update)
        if change < 1e-12:
            break
    assert change < 1e-12

    state = problem.solve(mesh, gamma)
    np.testing.assert_allclose(state.T.values, temperature, atol=1e-6)
    np.testing.assert_allclose(state.u.values[mesh.free_vertices], u_free,
                               atol=1e-6)
