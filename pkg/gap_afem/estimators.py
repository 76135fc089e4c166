"""Primal-dual gap estimators of the regularized problems.

Every estimator is the sum of elementwise contributions which are products
and squares of nonnegative quadrature values, so each term and each element
indicator is nonnegative exactly as computed. Elementwise means of plus
functions use the same quadrature rule as the terms they enter.
"""
import logging
from dataclasses import dataclass, field
from functools import singledispatch

import numpy as np

from .constant import DEFAULT_QUADRATURE_ORDER
from .fem_spaces import (
    P0Field,
    S1Field,
    evaluate,
    l2_norm,
    project_p0,
    quadrature_rule,
)
from .solvers import (
    MembraneState,
    ObstacleState,
    ThermoformingState,
    membrane_rhs,
    reconstruct_dual,
)


LOGGER = logging.getLogger(__name__)

ORDER = DEFAULT_QUADRATURE_ORDER


@dataclass(frozen=True, eq=False)
class Estimate:
    """Squared estimator with its localization and breakdown.

    :param total: Estimator value ``eta^2``.
    :param per_element: Indicator of every triangle, summing to ``total``.
    :param terms: Total of every named term.
    :param element_terms: Elementwise values of every named term.
    :param dgamma: Proxy of the derivative of ``eta^2`` in gamma.
    :param oscillation: Named data oscillation bounds.
    :param duals: Reconstructed dual fields.
    """

    total: float
    per_element: np.ndarray
    terms: dict
    element_terms: dict
    dgamma: float
    oscillation: dict = field(default_factory=dict)
    duals: dict = field(default_factory=dict)

    @property
    def eta(self):
        return float(np.sqrt(self.total))


def _build(element_terms, dgamma, duals):
    per_element = sum(element_terms.values())
    return Estimate(
        total=float(per_element.sum()),
        per_element=per_element,
        terms={name: float(values.sum())
               for name, values in element_terms.items()},
        element_terms=element_terms,
        dgamma=float(dgamma),
        duals=duals,
    )


def _plus_parts(mesh, gap):
    """Return elementwise pieces of the penalty terms of ``gap``.

    :param gap: Values of the penalty argument at the quadrature points.
    :return: ``(mean, projection, interface)`` with the mean of ``gap^+``,
             ``|gap^+ - mean|^2`` and ``(mean, (-gap)^+)`` per triangle.
    """
    _, weights = quadrature_rule(ORDER)
    plus = np.maximum(gap, 0.0)
    mean = plus @ weights
    projection = mesh.areas * (((plus - mean[:, None]) ** 2) @ weights)
    interface = mesh.areas * mean * (np.maximum(-gap, 0.0) @ weights)
    return mean, projection, interface


def _gradient_gap(primal, flux):
    """Return ``1/2 |flux - grad primal|^2`` per triangle."""
    _, weights = quadrature_rule(ORDER)
    difference = flux.at_quadrature(ORDER) - primal.gradient()[:, None, :]
    return 0.5 * primal.mesh.areas * (
        (difference ** 2).sum(axis=2) @ weights)


def rt0_l2_norm(flux):
    _, weights = quadrature_rule(ORDER)
    values = flux.at_quadrature(ORDER)
    return float(np.sqrt(np.sum(
        flux.mesh.areas * ((values ** 2).sum(axis=2) @ weights))))


def estimate_obstacle(state):
    """Estimate the error of an obstacle state.

    ``eta^2 = 1/2 |p - grad y|^2 + gamma/2 |a^+ - P0 a^+|^2
    + gamma (P0 a^+, (-a)^+)`` with ``a = psi - y`` and ``p`` the flux with
    ``-div p = f + gamma P0 a^+``.

    :param state: ObstacleState
    :return: Estimate
    """
    mesh, gamma = state.mesh, state.gamma
    gap = evaluate(state.psi, mesh, ORDER) - evaluate(state.y, mesh, ORDER)
    mean, projection, interface = _plus_parts(mesh, gap)

    flux = reconstruct_dual(mesh, state.f.values + gamma * mean)
    element_terms = {
        'gradient_gap': _gradient_gap(state.y, flux),
        'projection_gap': 0.5 * gamma * projection,
        'interface': gamma * interface,
    }
    return _build(element_terms, 0.5 * projection.sum(), {
        'p': flux,
        'z': P0Field(mesh, -gamma * mean),
    })


def estimate_thermoforming(state):
    """Estimate the error of a thermoforming state.

    With ``b = u - Phi0 - L T``, ``z = gamma P0 b^+`` and ``s = k P0 T``::

        eta^2 = 1/2 |grad u - p|^2 + 1/2 |grad T - q|^2 + k/2 |T - P0 T|^2
                + gamma/2 |b^+ - P0 b^+|^2 + gamma (P0 b^+, (-b)^+)

    where ``-div p = f - z`` and ``-div q = P0 g(-b) - s`` with zero normal
    flux of ``q`` on the boundary.
    """
    mesh, gamma = state.mesh, state.gamma
    params = state.params
    _, weights = quadrature_rule(ORDER)

    u_q = evaluate(state.u, mesh, ORDER)
    t_q = evaluate(state.T, mesh, ORDER)
    gap = u_q - evaluate(params.phi0, mesh, ORDER) - \
        evaluate(params.lmult, mesh, ORDER) * t_q
    mean, projection, interface = _plus_parts(mesh, gap)

    z = gamma * mean
    t_mean = project_p0(state.T).values
    s = params.k * t_mean
    source = params.g(-gap) @ weights

    p = reconstruct_dual(mesh, params.f - z)
    q = reconstruct_dual(mesh, source - s, neumann=True)

    element_terms = {
        'gradient_gap_u': _gradient_gap(state.u, p),
        'gradient_gap_T': _gradient_gap(state.T, q),
        'temperature_projection': 0.5 * params.k * mesh.areas * (
            ((t_q - t_mean[:, None]) ** 2) @ weights),
        'projection_gap': 0.5 * gamma * projection,
        'interface': gamma * interface,
    }
    return _build(element_terms, 0.5 * projection.sum(), {
        'p': p,
        'q': q,
        'z': P0Field(mesh, z),
        's': P0Field(mesh, s),
    })


def estimate_membrane(state):
    """Estimate the error of a two-membrane state.

    ``eta^2 = 1/2 |grad m - p_m|^2 + 1/2 |grad delta - p_delta|^2
    + gamma/2 |(-delta)^+ - P0 (-delta)^+|^2 + gamma (P0 (-delta)^+,
    delta^+)`` where ``-div p_m = P0 f_m(delta)`` and
    ``-div p_delta = P0 f_delta(delta) + gamma P0 (-delta)^+ - mu``.
    """
    mesh, gamma = state.mesh, state.gamma
    gap = -evaluate(state.delta, mesh, ORDER)
    mean, projection, interface = _plus_parts(mesh, gap)

    mean_force, difference_force = membrane_rhs(state.delta, state.params)
    p_m = reconstruct_dual(mesh, project_p0(mean_force, mesh, ORDER))
    p_delta = reconstruct_dual(
        mesh,
        project_p0(difference_force, mesh, ORDER).values + gamma * mean -
        state.mu)

    element_terms = {
        'gradient_gap_m': _gradient_gap(state.m, p_m),
        'gradient_gap_delta': _gradient_gap(state.delta, p_delta),
        'projection_gap': 0.5 * gamma * projection,
        'interface': gamma * interface,
    }
    return _build(element_terms, 0.5 * projection.sum(), {
        'p_m': p_m,
        'p_delta': p_delta,
        'z': P0Field(mesh, -gamma * mean),
    })


ESTIMATOR_TERMS = {
    'obstacle': ('gradient_gap', 'projection_gap', 'interface'),
    'thermoforming': ('gradient_gap_u', 'gradient_gap_T',
                      'temperature_projection', 'projection_gap',
                      'interface'),
    'membrane': ('gradient_gap_m', 'gradient_gap_delta', 'projection_gap',
                 'interface'),
}


@singledispatch
def estimate(state):
    """Dispatch to the estimator of the state's problem."""
    raise TypeError('No estimator for %s' % type(state).__name__)


estimate.register(ObstacleState, estimate_obstacle)
estimate.register(ThermoformingState, estimate_thermoforming)
estimate.register(MembraneState, estimate_membrane)


@singledispatch
def oscillation_bounds(state, exact_data, estimate=None):
    """Return primal and dual data oscillation bounds.

    :param state: Converged state.
    :param exact_data: Mapping of data names to exact evaluables; missing
                       entries default to the discrete data.
    :param estimate: Estimate of ``state`` providing the dual fields,
                     computed when omitted.
    :return: ``{'primal': ..., 'dual': ...}``
    """
    raise TypeError('No oscillation bounds for %s' % type(state).__name__)


@oscillation_bounds.register
def _(state: ObstacleState, exact_data, estimate=None):
    mesh, gamma = state.mesh, state.gamma
    estimate = estimate or estimate_obstacle(state)
    f_exact = evaluate(exact_data.get('f', state.f), mesh, ORDER)
    psi_exact = evaluate(exact_data.get('psi', state.psi), mesh, ORDER)
    y = evaluate(state.y, mesh, ORDER)

    force = l2_norm(mesh, f_exact - evaluate(state.f, mesh, ORDER))
    obstacle = l2_norm(mesh, psi_exact - evaluate(state.psi, mesh, ORDER))
    active = l2_norm(mesh, np.maximum(psi_exact - y, 0.0))
    flux = rt0_l2_norm(estimate.duals['p'])
    multiplier = l2_norm(mesh, estimate.duals['z'])

    return {
        'primal': force * l2_norm(mesh, y) + gamma * active * obstacle,
        'dual': (force + flux) * force + multiplier * obstacle,
    }


@oscillation_bounds.register
def _(state: ThermoformingState, exact_data, estimate=None):
    mesh, gamma = state.mesh, state.gamma
    params = state.params
    estimate = estimate or estimate_thermoforming(state)
    phi_exact = evaluate(exact_data.get('phi0', params.phi0), mesh, ORDER)
    lipschitz = params.g_lipschitz

    mould = l2_norm(mesh, phi_exact - evaluate(params.phi0, mesh, ORDER))
    active = l2_norm(mesh, np.maximum(
        evaluate(state.u, mesh, ORDER) - phi_exact -
        evaluate(params.lmult, mesh, ORDER) *
        evaluate(state.T, mesh, ORDER), 0.0))
    temperature = l2_norm(mesh, state.T)
    flux = rt0_l2_norm(estimate.duals['q'])
    multiplier = l2_norm(mesh, estimate.duals['z'])

    return {
        'primal': gamma * active * mould + lipschitz * mould * temperature,
        'dual': lipschitz * (lipschitz * mould + flux) * mould +
        multiplier * mould,
    }


@oscillation_bounds.register
def _(state: MembraneState, exact_data, estimate=None):
    mesh = state.mesh
    params = state.params
    estimate = estimate or estimate_membrane(state)

    bounds = {'primal': 0.0, 'dual': 0.0}
    discrete = membrane_rhs(state.delta, params)
    exact_params = type(params)(
        alpha=params.alpha,
        f_const_1=_as_p0(exact_data.get('f_const_1', params.f_const_1),
                         mesh),
        f_const_2=_as_p0(exact_data.get('f_const_2', params.f_const_2),
                         mesh),
    )
    exact = membrane_rhs(state.delta, exact_params)
    for primal, flux, force, exact_force in zip(
            (state.m, state.delta), ('p_m', 'p_delta'), discrete, exact):
        defect = l2_norm(mesh, evaluate(exact_force, mesh, ORDER) -
                         evaluate(force, mesh, ORDER))
        bounds['primal'] += defect * l2_norm(mesh, primal)
        bounds['dual'] += (defect + rt0_l2_norm(estimate.duals[flux])) * \
            defect
    return bounds


def _as_p0(quantity, mesh):
    if isinstance(quantity, P0Field):
        return quantity
    return project_p0(quantity, mesh, ORDER)


@dataclass(frozen=True)
class QuadraticValueModel:
    """Value function of ``f(x) + gamma pi(x) + rho(x) / gamma``.

    ``f(x) = 1/2 x.Q x - b.x``, ``pi(x) = 1/2 x.P x`` and
    ``rho(x) = 1/2 x.R x`` with ``Q`` positive definite and ``P``, ``R``
    positive semidefinite.
    """

    objective: np.ndarray
    linear: np.ndarray
    penalty: np.ndarray
    correction: np.ndarray

    def minimizer(self, gamma):
        matrix = self.objective + gamma * self.penalty + \
            self.correction / gamma
        return np.linalg.solve(matrix, self.linear)

    def _parts(self, x):
        return (0.5 * x @ self.objective @ x - self.linear @ x,
                0.5 * x @ self.penalty @ x,
                0.5 * x @ self.correction @ x)

    def value(self, gamma):
        f, pi, rho = self._parts(self.minimizer(gamma))
        return f + gamma * pi + rho / gamma

    def derivative(self, gamma):
        """``v'(gamma) = pi(x_gamma) - rho(x_gamma) / gamma^2``."""
        _, pi, rho = self._parts(self.minimizer(gamma))
        return pi - rho / gamma ** 2
