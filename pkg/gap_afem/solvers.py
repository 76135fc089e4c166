"""Discrete equilibria of the regularized problems and dual reconstruction.

All three problems are solved by a semismooth Newton method, damped by
halving the step until the Euclidean norm of the residual decreases. Primal
unknowns with homogeneous Dirichlet conditions are solved for on the free
vertices only.
"""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import (
    assemble_load,
    assemble_mass,
    assemble_mixed_rt0,
    assemble_plus_term,
    assemble_stiffness,
    assemble_weighted_mass,
    restrict,
)
from .constant import (
    DEFAULT_MAX_LINE_SEARCH_STEPS,
    DEFAULT_MAX_NEWTON_ITERATIONS,
    DEFAULT_TOL_NEWTON,
)
from .fem_spaces import (
    Combination,
    P0Field,
    RT0Field,
    S1Field,
    evaluate,
    l2_norm,
)
from .mesh import Mesh
from .sparse_linalg import (
    LinearSolverError,
    solve_bordered,
    solve_general,
    solve_saddle,
    solve_spd,
)


LOGGER = logging.getLogger(__name__)

# Residuals this many machine epsilons below the size of their terms are
# treated as converged.
ROUNDOFF_FACTOR = 1e3

DIVERGENCE_TOL = 1e-8
NEUMANN_MEAN_TOL = 1e-6


class NewtonConvergenceError(RuntimeError):
    """Raised when the Newton iteration cap is reached."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class ObstacleState:
    mesh: Mesh
    gamma: float
    y: S1Field
    psi: S1Field
    f: P0Field
    newton_iterations: int
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class ThermoformingData:
    """Thermoforming data discretized on one mesh.

    :param k: Heat transfer coefficient, > 0.
    :param f: Constant pressure.
    :param g: Decreasing heat source as a function of the gap.
    :param g_prime: Derivative of ``g``.
    :param lmult: Nodal multiplier realizing the mould response ``L``.
    :param phi0: Nodal interpolant of the initial mould.
    :param g_lipschitz: Lipschitz constant of ``g``.
    """

    k: float
    f: float
    g: Callable
    g_prime: Callable
    lmult: S1Field
    phi0: S1Field
    g_lipschitz: float = 1.25

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError('k must be positive, got %r' % (self.k,))
        if self.lmult.mesh is not self.phi0.mesh:
            raise ValueError('lmult and phi0 live on different meshes')
        samples = np.asarray(self.g_prime(np.linspace(-10.0, 10.0, 201)))
        if np.any(samples > 0):
            raise ValueError('g must be decreasing, g\' > 0 was sampled')

    @property
    def mesh(self):
        return self.phi0.mesh


@dataclass(frozen=True, eq=False)
class ThermoformingState:
    mesh: Mesh
    gamma: float
    u: S1Field
    T: S1Field
    params: ThermoformingData
    newton_iterations: int
    residual: float = 0.0

    def gap(self):
        """Nodal values of ``u - Phi0 - L T``."""
        return self.u.values - self.params.phi0.values - \
            self.params.lmult.values * self.T.values


@dataclass(frozen=True, eq=False)
class MembraneData:
    """Membrane data discretized on one mesh.

    :param alpha: Coupling coefficient, below the first Dirichlet
                  eigenvalue of the domain.
    :param f_const_1: Force acting on the first membrane.
    :param f_const_2: Force acting on the second membrane.
    """

    alpha: float
    f_const_1: P0Field
    f_const_2: P0Field

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError('alpha must be nonnegative, got %r'
                             % (self.alpha,))
        if self.f_const_1.mesh is not self.f_const_2.mesh:
            raise ValueError('Forces live on different meshes')

    @property
    def mesh(self):
        return self.f_const_1.mesh


@dataclass(frozen=True, eq=False)
class MembraneState:
    mesh: Mesh
    gamma: float
    m: S1Field
    delta: S1Field
    mu: float
    params: MembraneData
    newton_iterations: int
    residual: float = 0.0

    @property
    def u1(self):
        return S1Field(self.mesh, self.m.values - self.delta.values,
                       homogeneous_dirichlet=True)

    @property
    def u2(self):
        return S1Field(self.mesh, self.m.values + self.delta.values,
                       homogeneous_dirichlet=True)

    def constraint_violation(self):
        """Return ``|(u1 - u2)^+|`` in L2."""
        return l2_norm(self.mesh, np.maximum(
            evaluate(self.u1, self.mesh) - evaluate(self.u2, self.mesh), 0.0))


def membrane_rhs(delta, params):
    """Return the forces ``(f_m(delta), f_delta(delta))``.

    ``f_m = (f_1 + f_2) / 2 - alpha delta`` and
    ``f_delta = (f_2 - f_1) / 2 + alpha delta``.
    """
    alpha = params.alpha
    return (
        Combination((0.5, params.f_const_1), (0.5, params.f_const_2),
                    (-alpha, delta)),
        Combination((-0.5, params.f_const_1), (0.5, params.f_const_2),
                    (alpha, delta)),
    )


def _norm(vector):
    return float(np.linalg.norm(vector))


def semismooth_newton(system, direction, initial, tol, max_iterations,
                      label='Newton'):
    """Damped semismooth Newton iteration.

    :param system: ``x -> (residual, jacobian, scale)`` where ``scale`` is
                   the size of the terms making up the residual.
    :param direction: ``(x, residual, jacobian) -> step``.
    :param initial: Initial iterate.
    :param tol: Absolute tolerance on the residual norm.
    :param max_iterations: Cap on the number of accepted iterates.
    :return: ``(x, iterations, residual_norm)``, ``iterations`` counting the
             accepted iterates including the initial one.
    """
    x = np.array(initial, dtype=float)
    residual, jacobian, scale = system(x)
    residual_norm = _norm(residual)
    iterations = 1

    def converged(norm, scale):
        return norm <= max(tol, ROUNDOFF_FACTOR * np.finfo(float).eps * scale)

    while not converged(residual_norm, scale):
        if iterations >= max_iterations:
            raise NewtonConvergenceError(
                '%s did not converge in %d iterations, residual %.3e'
                % (label, max_iterations, residual_norm),
                residual=residual_norm, iterations=iterations)

        step = direction(x, residual, jacobian)
        length = 1.0
        for _ in range(DEFAULT_MAX_LINE_SEARCH_STEPS):
            trial = x + length * step
            trial_system = system(trial)
            trial_norm = _norm(trial_system[0])
            if trial_norm < residual_norm:
                break
            length *= 0.5
        else:
            LOGGER.warning('%s line search failed at residual %.3e, taking '
                           'the full step', label, residual_norm)
            length = 1.0
            trial = x + step
            trial_system = system(trial)
            trial_norm = _norm(trial_system[0])

        x = trial
        residual, jacobian, scale = trial_system
        residual_norm = trial_norm
        iterations += 1
        LOGGER.debug('%s iteration %d: residual %.3e, step length %g',
                     label, iterations, residual_norm, length)

    return x, iterations, residual_norm


def _initial_values(values, mesh):
    """Reuse or prolongate nodal values of a previous state."""
    if values is None:
        return np.zeros(mesh.n_vertices)
    values = np.asarray(values, dtype=float)
    if values.shape == (mesh.n_vertices,):
        return values
    if values.shape == (mesh.n_coarse_vertices,):
        return mesh.prolongate(values)
    raise ValueError('Initial values of length %d do not match the mesh'
                     % values.shape[0])


def _embed(mesh, free_values):
    values = np.zeros(mesh.n_vertices)
    values[mesh.free_vertices] = free_values
    return values


def solve_obstacle(mesh, psi, f, gamma, tol_newton=DEFAULT_TOL_NEWTON,
                   initial=None, max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
    """Solve ``-Laplace y - gamma (psi - y)^+ = f``, ``y = 0`` on the boundary.

    :param psi: Discrete obstacle, negative on the boundary.
    :param f: Piecewise constant force.
    :param gamma: Penalty parameter, > 0.
    :param initial: Previous ObstacleState (same or parent mesh) or None.
    :return: ObstacleState
    """
    if not gamma > 0:
        raise ValueError('gamma must be positive, got %r' % (gamma,))
    if np.any(psi.values[mesh.boundary_vertices] >= 0):
        raise ValueError('The obstacle must be negative on the boundary')

    free = mesh.free_vertices
    stiffness = assemble_stiffness(mesh)
    load = assemble_load(mesh, f)

    def system(x):
        y = _embed(mesh, x)
        penalty, penalty_jacobian = assemble_plus_term(
            mesh, S1Field(mesh, psi.values - y), gamma)
        elastic = (stiffness @ y)[free]
        residual = elastic - penalty[free] - load[free]
        jacobian = restrict(stiffness + penalty_jacobian, free)
        scale = _norm(elastic) + _norm(penalty[free]) + _norm(load[free])
        return residual, jacobian, scale

    def direction(x, residual, jacobian):
        return solve_spd(jacobian, -residual)

    start = _initial_values(
        None if initial is None else initial.y.values, mesh)[free]
    x, iterations, residual = semismooth_newton(
        system, direction, start, tol_newton, max_iterations,
        label='Obstacle Newton (gamma=%g)' % gamma)

    return ObstacleState(
        mesh=mesh,
        gamma=gamma,
        y=S1Field.from_free(mesh, x),
        psi=psi,
        f=f,
        newton_iterations=iterations,
        residual=residual,
    )


def solve_thermoforming(mesh, params, gamma, tol_newton=DEFAULT_TOL_NEWTON,
                        initial=None,
                        max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
    """Solve the coupled membrane and temperature system.

    ``-Laplace u + gamma (u - Phi0 - L T)^+ = f`` with ``u = 0`` on the
    boundary and ``k T - Laplace T = g(Phi0 + L T - u)`` with natural
    boundary conditions. Unknowns are ``u`` on the free vertices followed by
    ``T`` on all vertices.

    :param params: ThermoformingData on ``mesh``.
    :param initial: Previous ThermoformingState or None.
    :return: ThermoformingState
    """
    if not gamma > 0:
        raise ValueError('gamma must be positive, got %r' % (gamma,))
    if params.mesh is not mesh:
        raise ValueError('Thermoforming data live on another mesh')

    free = mesh.free_vertices
    n_free = free.size
    every = np.arange(mesh.n_vertices)
    stiffness = assemble_stiffness(mesh)
    mass = assemble_mass(mesh)
    load = assemble_load(mesh, params.f)[free]
    temperature_operator = params.k * mass + stiffness
    phi0 = evaluate(params.phi0, mesh)
    lmult = evaluate(params.lmult, mesh)

    def system(x):
        u = _embed(mesh, x[:n_free])
        temperature = x[n_free:]
        u_q = evaluate(S1Field(mesh, u), mesh)
        t_q = evaluate(S1Field(mesh, temperature), mesh)
        gap = u_q - phi0 - lmult * t_q

        penalty, penalty_jacobian = assemble_plus_term(mesh, gap, gamma)
        coupling = gamma * assemble_weighted_mass(
            mesh, (gap > 0) * lmult)
        source = params.g(-gap)
        source_prime = params.g_prime(-gap)

        elastic = (stiffness @ u)[free]
        heat = temperature_operator @ temperature
        source_load = assemble_load(mesh, source)
        residual = np.concatenate([
            elastic + penalty[free] - load,
            heat - source_load,
        ])
        derivative = assemble_weighted_mass(mesh, source_prime)
        derivative_l = assemble_weighted_mass(mesh, source_prime * lmult)
        jacobian = sp.bmat([
            [restrict(stiffness + penalty_jacobian, free),
             restrict(-coupling, free, every)],
            [restrict(derivative, every, free),
             temperature_operator - derivative_l],
        ], format='csr')
        scale = _norm(elastic) + _norm(penalty) + _norm(load) + \
            _norm(heat) + _norm(source_load)
        return residual, jacobian, scale

    def direction(x, residual, jacobian):
        return solve_general(jacobian, -residual)

    if initial is None:
        start_u = np.zeros(mesh.n_vertices)
        start_t = np.zeros(mesh.n_vertices)
    else:
        start_u = _initial_values(initial.u.values, mesh)
        start_t = _initial_values(initial.T.values, mesh)
    x, iterations, residual = semismooth_newton(
        system, direction, np.concatenate([start_u[free], start_t]),
        tol_newton, max_iterations,
        label='Thermoforming Newton (gamma=%g)' % gamma)

    return ThermoformingState(
        mesh=mesh,
        gamma=gamma,
        u=S1Field.from_free(mesh, x[:n_free]),
        T=S1Field(mesh, x[n_free:]),
        params=params,
        newton_iterations=iterations,
        residual=residual,
    )


def solve_membrane(mesh, params, gamma, tol_newton=DEFAULT_TOL_NEWTON,
                   initial=None, max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
    """Solve the two-membrane system in mean and half-difference variables.

    First ``-Laplace delta - gamma (-delta)^+ + mu = f_delta(delta)`` with
    the volume constraint ``int delta = |Omega|`` is solved by Newton steps
    on bordered systems, then the linear ``-Laplace m = f_m(delta)``.

    :param params: MembraneData on ``mesh``.
    :param initial: Previous MembraneState or None.
    :return: MembraneState
    """
    if not gamma > 0:
        raise ValueError('gamma must be positive, got %r' % (gamma,))
    if params.mesh is not mesh:
        raise ValueError('Membrane data live on another mesh')

    free = mesh.free_vertices
    stiffness = assemble_stiffness(mesh)
    mass = assemble_mass(mesh)
    alpha = params.alpha
    operator = restrict(stiffness - alpha * mass, free)
    volume = assemble_load(mesh, 1.0)[free]
    area = float(mesh.areas.sum())
    load = assemble_load(mesh, Combination(
        (0.5, params.f_const_2), (-0.5, params.f_const_1)))[free]

    def system(x):
        delta = _embed(mesh, x[:-1])
        mu = x[-1]
        penalty, penalty_jacobian = assemble_plus_term(
            mesh, S1Field(mesh, -delta), gamma)
        elastic = operator @ x[:-1]
        residual = np.concatenate([
            elastic - penalty[free] + mu * volume - load,
            [volume @ x[:-1] - area],
        ])
        jacobian = operator + restrict(penalty_jacobian, free)
        scale = _norm(elastic) + _norm(penalty[free]) + \
            abs(mu) * _norm(volume) + _norm(load) + area
        return residual, jacobian, scale

    def direction(x, residual, jacobian):
        step, step_mu = solve_bordered(
            jacobian, volume, -residual[:-1], -residual[-1])
        return np.append(step, step_mu)

    if initial is None:
        start = np.zeros(free.size + 1)
    else:
        start = np.append(
            _initial_values(initial.delta.values, mesh)[free], initial.mu)
    x, iterations, residual = semismooth_newton(
        system, direction, start, tol_newton, max_iterations,
        label='Membrane Newton (gamma=%g)' % gamma)

    delta = S1Field.from_free(mesh, x[:-1])
    mean_force, _ = membrane_rhs(delta, params)
    m_rhs = assemble_load(mesh, mean_force)[free]
    m = solve_spd(restrict(stiffness, free), m_rhs)

    return MembraneState(
        mesh=mesh,
        gamma=gamma,
        m=S1Field.from_free(mesh, m),
        delta=delta,
        mu=float(x[-1]),
        params=params,
        newton_iterations=iterations,
        residual=residual,
    )


def reconstruct_dual(mesh, rhs, neumann=False):
    """Return the RT0 flux of the mixed Poisson problem with source ``rhs``.

    Solves ``(p, q) + (y, div q) = 0`` and ``(div p, z) = -(rhs, z)`` for
    all RT0 ``q`` and P0 ``z``, hence ``-div p = rhs`` on every triangle.
    With ``neumann`` the flux vanishes on the boundary; ``rhs`` must then
    have zero mean and is corrected by its round-off mean.

    :param rhs: P0Field or one value per triangle.
    :return: RT0Field
    """
    values = rhs.values if isinstance(rhs, P0Field) else \
        np.asarray(rhs, dtype=float)
    if values.shape != (mesh.n_triangles,):
        raise ValueError('rhs needs one value per triangle')

    mass, divergence = assemble_mixed_rt0(mesh)
    flux = np.zeros(mesh.n_edges)

    if not neumann:
        flux, _ = solve_saddle(mass, divergence, np.zeros(mesh.n_edges),
                               -mesh.areas * values)
    else:
        mean = float(mesh.areas @ values) / float(mesh.areas.sum())
        scale = float(np.max(np.abs(values), initial=0.0))
        if abs(mean) > NEUMANN_MEAN_TOL * max(1.0, scale):
            LOGGER.warning('Correcting source of pure Neumann flux by its '
                           'mean %.3e', mean)
        values = values - mean
        interior = np.flatnonzero(mesh.edge_multiplicity == 2)
        reduced = restrict(divergence, np.arange(mesh.n_triangles - 1),
                           interior)
        interior_flux, _ = solve_saddle(
            restrict(mass, interior), reduced, np.zeros(interior.size),
            (-mesh.areas * values)[:-1])
        flux[interior] = interior_flux

    dual = RT0Field(mesh, flux)
    defect, allowed = _divergence_defect(divergence, flux, mesh.areas * values)
    if np.any(defect > allowed):
        worst = int(np.argmax(defect / allowed))
        raise LinearSolverError(
            'Divergence defect %.3e of reconstructed flux on triangle %d '
            'exceeds %.3e' % (defect[worst], worst, allowed[worst]))
    LOGGER.debug('Reconstructed flux with divergence defect %.3e',
                 np.max(defect, initial=0.0))
    return dual


def _divergence_defect(divergence, flux, load):
    """Return the integrated divergence defect per triangle and its bound.

    The bound is relative to the local terms plus round-off of the largest
    terms of the whole system, which dominates on tiny triangles.
    """
    defect = np.abs(divergence @ flux + load)
    scale = abs(divergence) @ np.abs(flux) + np.abs(load)
    allowed = DIVERGENCE_TOL * scale + ROUNDOFF_FACTOR * \
        np.finfo(float).eps * np.max(scale, initial=0.0)
    return defect, allowed
