"""Discrete fields, quadrature and projections on a Mesh.

S1 fields carry one value per vertex, P0 fields one value per triangle and
RT0 fields the normal flux through every global edge. The global normal of
an edge points to the right of its lower-to-higher vertex tangent, and the
basis function of an edge has unit normal component on it.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .constant import DEFAULT_QUADRATURE_ORDER
from .mesh import Mesh


LOGGER = logging.getLogger(__name__)

_A1 = 0.44594849091596488632
_W1 = 0.22338158967801146570
_A2 = 0.09157621350977074346
_W2 = 0.10995174365532186764

# Symmetric rules with positive weights: barycentric points and weights
# normalised to sum to one.
QUADRATURE_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6],
                  [1 / 6, 2 / 3, 1 / 6],
                  [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    4: (np.array([[1 - 2 * _A1, _A1, _A1],
                  [_A1, 1 - 2 * _A1, _A1],
                  [_A1, _A1, 1 - 2 * _A1],
                  [1 - 2 * _A2, _A2, _A2],
                  [_A2, 1 - 2 * _A2, _A2],
                  [_A2, _A2, 1 - 2 * _A2]]),
        np.array([_W1, _W1, _W1, _W2, _W2, _W2])),
}


def quadrature_rule(order):
    """Return barycentric points and weights exact up to degree ``order``."""
    if order not in QUADRATURE_RULES:
        raise ValueError('Quadrature order must be one of %s, got %r'
                         % (sorted(QUADRATURE_RULES), order))
    return QUADRATURE_RULES[order]


def quadrature_points(mesh, order=DEFAULT_QUADRATURE_ORDER):
    """Return the (n_triangles, n_points, 2) physical quadrature points."""
    barycentric, _ = quadrature_rule(order)
    return np.einsum('qk,tkd->tqd', barycentric,
                     mesh.vertices[mesh.triangles])


def _check_mesh(field, mesh):
    if mesh is not None and field.mesh is not mesh:
        raise ValueError('Field is defined on another mesh')


def _readonly(values, length, name):
    values = np.array(values, dtype=float)
    if values.shape != (length,):
        raise ValueError('%s needs %d values, got shape %s'
                         % (name, length, values.shape))
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class S1Field:
    """Continuous piecewise affine function given by its vertex values."""

    mesh: Mesh
    values: np.ndarray
    homogeneous_dirichlet: bool = False

    def __post_init__(self):
        values = _readonly(self.values, self.mesh.n_vertices, 'S1Field')
        if self.homogeneous_dirichlet and \
                np.any(values[self.mesh.boundary_vertices] != 0):
            raise ValueError('Dirichlet S1Field has nonzero boundary values')
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_free(cls, mesh, free_values):
        """Build a Dirichlet field from its values on the free vertices."""
        values = np.zeros(mesh.n_vertices)
        values[mesh.free_vertices] = free_values
        return cls(mesh, values, homogeneous_dirichlet=True)

    def at_quadrature(self, order=DEFAULT_QUADRATURE_ORDER):
        barycentric, _ = quadrature_rule(order)
        return self.values[self.mesh.triangles] @ barycentric.T

    def gradient(self):
        """Return the (n_triangles, 2) elementwise constant gradient."""
        return np.einsum('tk,tkd->td', self.values[self.mesh.triangles],
                         self.mesh.gradients)


@dataclass(frozen=True, eq=False)
class P0Field:
    """Piecewise constant function given by its triangle values."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, 'values',
            _readonly(self.values, self.mesh.n_triangles, 'P0Field'))

    def at_quadrature(self, order=DEFAULT_QUADRATURE_ORDER):
        _, weights = quadrature_rule(order)
        return np.repeat(self.values[:, None], weights.size, axis=1)


@dataclass(frozen=True, eq=False)
class RT0Field:
    """Lowest order Raviart-Thomas field given by its edge normal fluxes."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, 'values',
            _readonly(self.values, self.mesh.n_edges, 'RT0Field'))

    def at_quadrature(self, order=DEFAULT_QUADRATURE_ORDER):
        """Return the (n_triangles, n_points, 2) field values."""
        return np.einsum('tqkd,tk->tqd', rt0_basis(self.mesh, order),
                         self.values[self.mesh.triangle_edges])


class Combination():
    """Pointwise linear combination of evaluable quantities.

    :param terms: ``(coefficient, quantity)`` pairs, quantities being
                  anything accepted by :func:`evaluate`.
    """

    def __init__(self, *terms):
        self.terms = [(float(coefficient), quantity)
                      for coefficient, quantity in terms]

    def __repr__(self):
        return 'Combination(%s)' % ', '.join(
            '%g*%r' % term for term in self.terms)

    def at_quadrature(self, mesh, order=DEFAULT_QUADRATURE_ORDER):
        _, weights = quadrature_rule(order)
        total = np.zeros((mesh.n_triangles, weights.size))
        for coefficient, quantity in self.terms:
            total += coefficient * evaluate(quantity, mesh, order)
        return total


def evaluate(quantity, mesh, order=DEFAULT_QUADRATURE_ORDER):
    """Evaluate ``quantity`` at the quadrature points of ``mesh``.

    Accepted quantities: numbers, S1 and P0 fields, combinations, callables
    ``f(x, y)`` vectorised over arrays, and arrays already sampled at the
    quadrature points.

    :return: (n_triangles, n_points) array.
    """
    _, weights = quadrature_rule(order)
    shape = (mesh.n_triangles, weights.size)

    if isinstance(quantity, (S1Field, P0Field)):
        _check_mesh(quantity, mesh)
        return quantity.at_quadrature(order)
    if isinstance(quantity, Combination):
        return quantity.at_quadrature(mesh, order)
    if np.isscalar(quantity):
        return np.full(shape, float(quantity))
    if isinstance(quantity, np.ndarray):
        if quantity.shape != shape:
            raise ValueError('Sampled values need shape %s, got %s'
                             % (shape, quantity.shape))
        return quantity
    if callable(quantity):
        points = quadrature_points(mesh, order)
        values = quantity(points[:, :, 0], points[:, :, 1])
        return np.array(np.broadcast_to(values, shape), dtype=float)

    raise TypeError('Cannot evaluate %r on a mesh' % (quantity,))


def integrate_elementwise(mesh, integrand, order=DEFAULT_QUADRATURE_ORDER):
    """Return the integral of ``integrand`` over every triangle."""
    _, weights = quadrature_rule(order)
    return mesh.areas * (evaluate(integrand, mesh, order) @ weights)


def integrate(mesh, integrand, order=DEFAULT_QUADRATURE_ORDER):
    return float(np.sum(integrate_elementwise(mesh, integrand, order)))


def l2_norm(mesh, integrand, order=DEFAULT_QUADRATURE_ORDER):
    values = evaluate(integrand, mesh, order)
    return float(np.sqrt(integrate(mesh, values ** 2, order)))


def project_p0(quantity, mesh=None, order=DEFAULT_QUADRATURE_ORDER):
    """Return the elementwise mean of ``quantity`` as a P0Field.

    Means of S1 fields are exact (average of the vertex values); other
    quantities are averaged with the quadrature rule of ``order``.
    """
    if isinstance(quantity, S1Field):
        _check_mesh(quantity, mesh)
        return P0Field(quantity.mesh,
                       quantity.values[quantity.mesh.triangles].mean(axis=1))
    if isinstance(quantity, P0Field):
        _check_mesh(quantity, mesh)
        return P0Field(quantity.mesh, quantity.values)
    if mesh is None:
        raise ValueError('A mesh is needed to project %r' % (quantity,))

    _, weights = quadrature_rule(order)
    return P0Field(mesh, evaluate(quantity, mesh, order) @ weights)


def rt0_basis(mesh, order=DEFAULT_QUADRATURE_ORDER):
    """Return local RT0 basis values, shape (n_triangles, n_points, 3, 2).

    The function of local edge ``k`` reads
    ``sign * |E_k| / (2 |T|) * (x - P)`` with ``P`` the vertex opposite
    ``E_k``.
    """
    points = quadrature_points(mesh, order)
    opposite = np.roll(mesh.vertices[mesh.triangles], -2, axis=1)
    lengths = mesh.edge_lengths[mesh.triangle_edges]
    scale = mesh.edge_signs * lengths / (2.0 * mesh.areas[:, None])
    return scale[:, None, :, None] * (
        points[:, :, None, :] - opposite[:, None, :, :])


def rt0_divergence(field):
    """Return the exact piecewise constant divergence of an RT0 field."""
    mesh = field.mesh
    fluxes = mesh.edge_signs * mesh.edge_lengths[mesh.triangle_edges] * \
        field.values[mesh.triangle_edges]
    return P0Field(mesh, fluxes.sum(axis=1) / mesh.areas)


def rt0_interpolate(mesh, vector_function):
    """Interpolate ``vector_function(x, y) -> (qx, qy)`` by edge fluxes.

    The degree of freedom of an edge is the normal component at its
    midpoint, exact for every field of the form ``a + b * x``.
    """
    midpoints = mesh.edge_midpoints
    qx, qy = vector_function(midpoints[:, 0], midpoints[:, 1])
    qx = np.broadcast_to(np.asarray(qx, dtype=float), (mesh.n_edges,))
    qy = np.broadcast_to(np.asarray(qy, dtype=float), (mesh.n_edges,))
    return RT0Field(mesh, qx * mesh.edge_normals[:, 0] +
                    qy * mesh.edge_normals[:, 1])


def rt0_evaluate(field, points, triangles=None):
    """Evaluate an RT0 field at physical points.

    :param field: RT0Field
    :param points: (n, 2) points, each inside the triangle given in
                   ``triangles``.
    :param triangles: Triangle index of every point, defaults to
                      ``arange(n)`` (one point per triangle).
    :return: (n, 2) vector values.
    """
    mesh = field.mesh
    points = np.asarray(points, dtype=float)
    if triangles is None:
        triangles = np.arange(points.shape[0])
    triangles = np.asarray(triangles, dtype=int)
    if points.shape != (triangles.size, 2):
        raise ValueError('Expected %d points of dimension 2, got shape %s'
                         % (triangles.size, points.shape))

    local = mesh.triangle_edges[triangles]
    opposite = np.roll(mesh.vertices[mesh.triangles[triangles]], -2, axis=1)
    scale = mesh.edge_signs[triangles] * mesh.edge_lengths[local] / \
        (2.0 * mesh.areas[triangles, None]) * field.values[local]
    return np.einsum('tk,tkd->td', scale, points[:, None, :] - opposite)


def interpolate_s1(mesh, function):
    """Return the nodal S1 interpolant of a callable or a constant."""
    return S1Field(mesh, mesh.interpolate(function))
