"""Assembly of stiffness, mass, mixed and penalty operators.

All matrices are returned as canonical ``scipy.sparse.csr_matrix`` objects
(sorted, duplicate free column indices per row). Vertex based operators act
on the full vertex space unless a Dirichlet restriction is requested.
"""
import logging

import numpy as np
import scipy.sparse as sp

from .constant import DEFAULT_QUADRATURE_ORDER
from .fem_spaces import evaluate, quadrature_rule, rt0_basis


LOGGER = logging.getLogger(__name__)

_S1_LOCAL_MASS = np.array([[2.0, 1.0, 1.0],
                           [1.0, 2.0, 1.0],
                           [1.0, 1.0, 2.0]]) / 12.0


def canonical(matrix):
    """Return ``matrix`` as csr with sorted, summed column indices."""
    matrix = sp.csr_matrix(matrix)
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def _scatter(local, dofs, size):
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    matrix = sp.coo_matrix(
        (local.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
        shape=(size, size))
    return canonical(matrix)


def restrict(matrix, rows, cols=None):
    """Return the submatrix on the given row and column index sets."""
    cols = rows if cols is None else cols
    return canonical(sp.csr_matrix(matrix)[rows][:, cols])


def assemble_stiffness(mesh, dirichlet=False):
    """Return ``A_ij = (grad phi_i, grad phi_j)`` for the S1 hat functions.

    :param mesh: Mesh
    :param dirichlet: If true, keep only rows and columns of free vertices.
    """
    gradients = mesh.gradients
    local = mesh.areas[:, None, None] * np.einsum(
        'tid,tjd->tij', gradients, gradients)
    matrix = _scatter(local, mesh.triangles, mesh.n_vertices)
    if dirichlet:
        matrix = restrict(matrix, mesh.free_vertices)
    return matrix


def assemble_mass(mesh, space='S1', dirichlet=False):
    """Return the mass matrix of the S1 or P0 space.

    :param space: ``'S1'`` or ``'P0'``.
    :param dirichlet: Restrict an S1 matrix to the free vertices.
    """
    if space == 'P0':
        return canonical(sp.diags(mesh.areas))
    if space != 'S1':
        raise ValueError("space must be 'S1' or 'P0', got %r" % (space,))

    local = mesh.areas[:, None, None] * _S1_LOCAL_MASS[None, :, :]
    matrix = _scatter(local, mesh.triangles, mesh.n_vertices)
    if dirichlet:
        matrix = restrict(matrix, mesh.free_vertices)
    return matrix


def assemble_weighted_mass(mesh, weight, order=DEFAULT_QUADRATURE_ORDER):
    """Return ``(weight * phi_i, phi_j)`` evaluated with quadrature.

    :param weight: Anything accepted by :func:`gap_afem.fem_spaces.evaluate`.
    """
    barycentric, weights = quadrature_rule(order)
    values = evaluate(weight, mesh, order)
    local = mesh.areas[:, None, None] * np.einsum(
        'tq,q,qi,qj->tij', values, weights, barycentric, barycentric)
    return _scatter(local, mesh.triangles, mesh.n_vertices)


def assemble_load(mesh, source, order=DEFAULT_QUADRATURE_ORDER):
    """Return the load vector ``(source, phi_i)`` over all vertices."""
    barycentric, weights = quadrature_rule(order)
    values = evaluate(source, mesh, order)
    local = mesh.areas[:, None] * np.einsum(
        'tq,q,qi->ti', values, weights, barycentric)
    return np.bincount(mesh.triangles.reshape(-1), weights=local.reshape(-1),
                       minlength=mesh.n_vertices)


def assemble_plus_term(mesh, gap, gamma, order=DEFAULT_QUADRATURE_ORDER):
    """Assemble the penalty ``gamma * (gap)^+`` and its Newton derivative.

    The active indicator is evaluated at the quadrature points and is zero
    where ``gap`` vanishes.

    :param gap: Evaluable penalty argument.
    :param gamma: Penalty parameter, > 0.
    :return: ``(residual, jacobian)`` on the full vertex space, with
             ``residual_i = gamma * (gap^+, phi_i)`` and
             ``jacobian_ij = gamma * (chi_{gap > 0} phi_i, phi_j)``.
    """
    if not gamma > 0:
        raise ValueError('gamma must be positive, got %r' % (gamma,))
    values = evaluate(gap, mesh, order)
    residual = gamma * assemble_load(mesh, np.maximum(values, 0.0), order)
    jacobian = gamma * assemble_weighted_mass(
        mesh, (values > 0).astype(float), order)
    return residual, canonical(jacobian)


def assemble_mixed_rt0(mesh):
    """Return the RT0 mass matrix and the divergence matrix.

    ``M[E, F] = (psi_E, psi_F)`` and ``B[T, E] = (div psi_E, 1_T)``, so the
    mixed Poisson problem reads ``M p + B^T y = 0``,
    ``B p = -(rhs, 1_T)``.

    :return: ``(M, B)`` of shapes (n_edges, n_edges), (n_triangles, n_edges).
    """
    order = 2
    _, weights = quadrature_rule(order)
    basis = rt0_basis(mesh, order)
    local = mesh.areas[:, None, None] * np.einsum(
        'q,tqid,tqjd->tij', weights, basis, basis)
    mass = _scatter(local, mesh.triangle_edges, mesh.n_edges)

    fluxes = mesh.edge_signs * mesh.edge_lengths[mesh.triangle_edges]
    divergence = sp.coo_matrix(
        (fluxes.reshape(-1),
         (np.repeat(np.arange(mesh.n_triangles), 3),
          mesh.triangle_edges.reshape(-1))),
        shape=(mesh.n_triangles, mesh.n_edges))
    return mass, canonical(divergence)
