"""Benchmark problems binding domains, data and parameters.

A problem discretizes its data on a mesh, solves for a given penalty
parameter and estimates the error of its states. Problem objects only hold
plain values and module level functions so they can be sent to worker
processes.
"""
import logging
from dataclasses import dataclass, replace
from functools import partial, singledispatch
from typing import ClassVar, Optional

import numpy as np
from matplotlib.path import Path
from scipy.special import expit

from .assembly import (
    assemble_load,
    assemble_mass,
    assemble_stiffness,
)
from .constant import DEFAULT_MAX_NEWTON_ITERATIONS, DEFAULT_TOL_NEWTON
from .estimators import (
    estimate_membrane,
    estimate_obstacle,
    estimate_thermoforming,
    oscillation_bounds,
)
from .fem_spaces import (
    P0Field,
    evaluate,
    integrate,
    interpolate_s1,
    project_p0,
)
from .mesh import DomainSpec, create_domain
from .solvers import (
    MembraneData,
    MembraneState,
    ObstacleState,
    ThermoformingData,
    ThermoformingState,
    membrane_rhs,
    solve_membrane,
    solve_obstacle,
    solve_thermoforming,
)


LOGGER = logging.getLogger(__name__)

# First Dirichlet eigenvalue of the unit square, a lower bound for every
# benchmark domain contained in it.
FRIEDRICHS_BOUND = 2.0 * np.pi ** 2


def _polygon_area(points):
    x, y = np.asarray(points, dtype=float).T
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


class SupportRegion():
    """Polygon with polygonal holes where a constant force acts.

    :param outer: Vertices of the outer polygon.
    :param holes: Vertex lists of removed polygons.
    """

    def __init__(self, outer, holes=()):
        self.outer = [tuple(point) for point in outer]
        self.holes = [[tuple(point) for point in hole] for hole in holes]
        self._outer_path = Path(np.asarray(self.outer, dtype=float))
        self._hole_paths = [Path(np.asarray(hole, dtype=float))
                            for hole in self.holes]

    def __repr__(self):
        return 'SupportRegion(outer=%r, holes=%r)' % (self.outer, self.holes)

    @property
    def area(self):
        return _polygon_area(self.outer) - sum(
            _polygon_area(hole) for hole in self.holes)

    def contains(self, points):
        inside = self._outer_path.contains_points(points)
        for hole in self._hole_paths:
            inside &= ~hole.contains_points(points)
        return inside

    def __call__(self, x, y):
        """Evaluate the indicator at points given by coordinate arrays."""
        x, y = np.broadcast_arrays(x, y)
        inside = self.contains(np.column_stack([x.ravel(), y.ravel()]))
        return inside.reshape(x.shape).astype(float)

    def indicator(self, mesh):
        """Return the P0 indicator, decided at the triangle centroids."""
        return P0Field(mesh, self.contains(mesh.centroids).astype(float))


def _support_force(region, value, x, y):
    return value * region(x, y)


def _with_oscillation(problem, estimate, state):
    """Attach the data oscillation bounds of ``problem`` to ``estimate``."""
    return replace(estimate, oscillation=oscillation_bounds(
        state, problem.exact_data(), estimate))


UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]

SUPPORT_REGIONS = {
    'unit_square': SupportRegion(UNIT_SQUARE),
    'l_shape': SupportRegion([
        (1 / 6, 1 / 6), (1 / 3, 1 / 6), (1 / 3, 2 / 3),
        (5 / 6, 2 / 3), (5 / 6, 5 / 6), (1 / 6, 5 / 6),
    ]),
    'slit': SupportRegion(UNIT_SQUARE, holes=[[
        (0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75),
    ]]),
}


@dataclass(frozen=True)
class ParaboloidObstacle:
    """``height - curvature * |(x, y) - center|^2``."""

    height: float = -1.0
    curvature: float = 0.0
    center_x: float = 0.5
    center_y: float = 0.5

    def __call__(self, x, y):
        return self.height - self.curvature * (
            (x - self.center_x) ** 2 + (y - self.center_y) ** 2)


@dataclass(frozen=True)
class ObstacleProblem:
    """Obstacle problem ``y >= psi`` with force ``f`` and ``y = 0`` on the
    boundary."""

    domain: DomainSpec = DomainSpec('unit_square', 3)
    psi: object = ParaboloidObstacle()
    f: object = 0.0

    name: ClassVar[str] = 'obstacle'

    def initial_mesh(self):
        return create_domain(self.domain)

    def nrdof(self, mesh):
        return int(mesh.free_vertices.size)

    def discretize(self, mesh):
        """Return the nodal obstacle and the elementwise mean force."""
        psi = interpolate_s1(mesh, self.psi)
        if np.any(psi.values[mesh.boundary_vertices] >= 0):
            raise ValueError('The obstacle must be negative on the boundary')
        return psi, project_p0(self.f, mesh)

    def solve(self, mesh, gamma, tol_newton=DEFAULT_TOL_NEWTON,
              initial=None, max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
        psi, f = self.discretize(mesh)
        return solve_obstacle(mesh, psi, f, gamma, tol_newton, initial,
                              max_iterations)

    def exact_data(self):
        return {'psi': self.psi, 'f': self.f}

    def estimate(self, state):
        return _with_oscillation(self, estimate_obstacle(state), state)


@dataclass(frozen=True)
class ThermoformingProblem:
    """Thermoforming with a tent shaped mould and a logistic heat source.

    ``Phi0(x, y) = mould_height * max(0, 1 - 4 max(|x - 1/2|, |y - 1/2|))``
    and ``g(r) = g_scale / (1 + exp(g_rate r))``; ``g_rate = 0`` gives the
    constant source ``g_scale / 2``.
    """

    domain: DomainSpec = DomainSpec('unit_square', 2)
    k: float = 1.0
    f: float = 100.0
    g_scale: float = 1.0
    g_rate: float = 5.0
    lmult: float = 1.0
    mould_height: float = 1.0

    name: ClassVar[str] = 'thermoforming'

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError('k must be positive, got %r' % (self.k,))
        if not (self.g_scale >= 0 and self.g_rate >= 0):
            raise ValueError('g must be nonincreasing: g_scale >= 0, '
                             'g_rate >= 0')

    def g(self, r):
        return self.g_scale * expit(-self.g_rate * r)

    def g_prime(self, r):
        return -self.g_rate * self.g_scale * expit(-self.g_rate * r) * \
            expit(self.g_rate * r)

    @property
    def g_lipschitz(self):
        return 0.25 * self.g_rate * self.g_scale

    def phi0(self, x, y):
        return self.mould_height * np.maximum(
            0.0, 1.0 - 4.0 * np.maximum(np.abs(x - 0.5), np.abs(y - 0.5)))

    def initial_mesh(self):
        return create_domain(self.domain)

    def nrdof(self, mesh):
        return int(mesh.free_vertices.size + mesh.n_vertices)

    def discretize(self, mesh):
        return ThermoformingData(
            k=self.k,
            f=self.f,
            g=self.g,
            g_prime=self.g_prime,
            lmult=interpolate_s1(mesh, self.lmult),
            phi0=interpolate_s1(mesh, self.phi0),
            g_lipschitz=self.g_lipschitz,
        )

    def solve(self, mesh, gamma, tol_newton=DEFAULT_TOL_NEWTON,
              initial=None, max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
        return solve_thermoforming(mesh, self.discretize(mesh), gamma,
                                   tol_newton, initial, max_iterations)

    def exact_data(self):
        return {'phi0': self.phi0}

    def estimate(self, state):
        return _with_oscillation(
            self, estimate_thermoforming(state), state)


@dataclass(frozen=True)
class MembraneProblem:
    """Two membranes with volume constraint and constant forces on a
    support region."""

    domain: DomainSpec = DomainSpec('l_shape', 0)
    alpha: float = 2.0
    f_const_1: float = 1000.0
    f_const_2: float = -500.0
    support: Optional[SupportRegion] = None

    name: ClassVar[str] = 'membrane'

    def __post_init__(self):
        if not 0 <= self.alpha < FRIEDRICHS_BOUND:
            raise ValueError(
                'alpha must lie in [0, %.4f) to keep the problem strongly '
                'monotone, got %r' % (FRIEDRICHS_BOUND, self.alpha))

    @classmethod
    def l_shape_benchmark(cls, initial_refinements=0):
        return cls(DomainSpec('l_shape', initial_refinements), alpha=2.0,
                   f_const_1=1000.0, f_const_2=-500.0)

    @classmethod
    def slit_benchmark(cls, initial_refinements=0):
        return cls(DomainSpec('slit', initial_refinements), alpha=2.0,
                   f_const_1=1000.0, f_const_2=-1000.0)

    @property
    def support_region(self):
        if self.support is not None:
            return self.support
        return SUPPORT_REGIONS[self.domain.kind]

    def initial_mesh(self):
        return create_domain(self.domain)

    def nrdof(self, mesh):
        return int(2 * mesh.free_vertices.size)

    def discretize(self, mesh):
        indicator = self.support_region.indicator(mesh).values
        return MembraneData(
            alpha=self.alpha,
            f_const_1=P0Field(mesh, self.f_const_1 * indicator),
            f_const_2=P0Field(mesh, self.f_const_2 * indicator),
        )

    def solve(self, mesh, gamma, tol_newton=DEFAULT_TOL_NEWTON,
              initial=None, max_iterations=DEFAULT_MAX_NEWTON_ITERATIONS):
        return solve_membrane(mesh, self.discretize(mesh), gamma,
                              tol_newton, initial, max_iterations)

    def exact_data(self):
        region = self.support_region
        return {
            'f_const_1': partial(_support_force, region, self.f_const_1),
            'f_const_2': partial(_support_force, region, self.f_const_2),
        }

    def estimate(self, state):
        return _with_oscillation(self, estimate_membrane(state), state)


PROBLEMS = {
    problem.name: problem
    for problem in (ObstacleProblem, ThermoformingProblem, MembraneProblem)
}


def membrane_forces(delta, problem):
    """Return the evaluable forces ``(f_m(delta), f_delta(delta))``.

    :param delta: S1Field
    :param problem: MembraneProblem or MembraneData discretized on the mesh of
                    ``delta``.
    """
    params = problem.discretize(delta.mesh) \
        if isinstance(problem, MembraneProblem) else problem
    return membrane_rhs(delta, params)


def _penalty_energy(mesh, gap, gamma):
    return 0.5 * gamma * integrate(mesh, np.maximum(gap, 0.0) ** 2)


def _dirichlet_energy(mesh, values, load):
    stiffness = assemble_stiffness(mesh)
    return 0.5 * values @ (stiffness @ values) - load @ values


@singledispatch
def evaluate_energy(state, trial=None):
    """Return the regularized energy of ``trial`` with feedback frozen at
    ``state``.

    Every term coupling the unknowns is evaluated at ``state`` and enters
    as a fixed load: the temperature in the mould gap and the heat source
    ``g(Phi0 + L T - u)`` of the thermoforming energy, and ``alpha delta``
    in both membrane forces. The energy of ``trial`` is then a convex
    functional whose minimizer over the admissible set is ``state``.

    :param state: Converged state providing data and feedback.
    :param trial: State of the same kind on the same mesh whose primal
                  fields are evaluated, ``state`` itself when omitted.
    """
    raise TypeError('No energy for %s' % type(state).__name__)


@evaluate_energy.register
def _(state: ObstacleState, trial=None):
    mesh = state.mesh
    y = (trial or state).y
    return _dirichlet_energy(mesh, y.values, assemble_load(mesh, state.f)) + \
        _penalty_energy(mesh, evaluate(state.psi, mesh) - evaluate(y, mesh),
                        state.gamma)


@evaluate_energy.register
def _(state: ThermoformingState, trial=None):
    mesh = state.mesh
    params = state.params
    trial = trial or state
    u, temperature = trial.u.values, trial.T.values
    gap = evaluate(trial.u, mesh) - evaluate(params.phi0, mesh) - \
        evaluate(params.lmult, mesh) * evaluate(state.T, mesh)
    frozen_gap = evaluate(state.u, mesh) - evaluate(params.phi0, mesh) - \
        evaluate(params.lmult, mesh) * evaluate(state.T, mesh)

    membrane_energy = _dirichlet_energy(
        mesh, u, assemble_load(mesh, params.f)) + \
        _penalty_energy(mesh, gap, state.gamma)
    temperature_energy = _dirichlet_energy(
        mesh, temperature, assemble_load(mesh, params.g(-frozen_gap))) + \
        0.5 * params.k * temperature @ (assemble_mass(mesh) @ temperature)
    return membrane_energy + temperature_energy


@evaluate_energy.register
def _(state: MembraneState, trial=None):
    mesh = state.mesh
    trial = trial or state
    mean_force, difference_force = membrane_rhs(state.delta, state.params)

    delta_energy = _dirichlet_energy(
        mesh, trial.delta.values, assemble_load(mesh, difference_force)) + \
        _penalty_energy(mesh, -evaluate(trial.delta, mesh), state.gamma)
    mean_energy = _dirichlet_energy(mesh, trial.m.values,
                                    assemble_load(mesh, mean_force))
    return delta_energy + mean_energy
