"""Sparse linear solves with post hoc residual checks.

Every solver verifies the equations it claims to satisfy and raises
:class:`LinearSolverError` instead of returning an inaccurate solution.
"""
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import canonical
from .constant import DEFAULT_LINEAR_TOL, DEFAULT_SCHUR_TOL


LOGGER = logging.getLogger(__name__)

MAX_REFINEMENT_STEPS = 3
ROUNDOFF_FACTOR = 1e3


class LinearSolverError(RuntimeError):
    """Raised when a linear system cannot be solved to its tolerance."""


def _norm(vector):
    return float(np.linalg.norm(vector))


def _factorize(matrix):
    matrix = sp.csc_matrix(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError('Matrix must be square, got shape %s'
                         % (matrix.shape,))
    try:
        return spla.splu(matrix)
    except RuntimeError as error:
        raise LinearSolverError('Sparse factorization failed: %s'
                                % error) from error


def _cg(operator, rhs, tol, **kwargs):
    try:
        return spla.cg(operator, rhs, rtol=tol, atol=0.0, **kwargs)
    except TypeError:
        # scipy < 1.12 names the relative tolerance ``tol``
        return spla.cg(operator, rhs, tol=tol, atol=0.0, **kwargs)


def _jacobi_cg_solver(matrix, tol):
    diagonal = matrix.diagonal()
    if np.any(diagonal <= 0):
        raise LinearSolverError('CG needs a positive diagonal')
    preconditioner = spla.LinearOperator(
        matrix.shape, matvec=lambda vector: vector / diagonal)
    max_iterations = 10 * matrix.shape[0]

    def solve(rhs):
        solution, info = _cg(matrix, rhs, tol, M=preconditioner,
                             maxiter=max_iterations)
        if info != 0:
            raise LinearSolverError(
                'CG did not converge within %d iterations, the matrix may '
                'be indefinite or ill-conditioned' % max_iterations)
        return solution

    return solve


def _roundoff(matrix, solution):
    """Residual size attainable in floating point for ``matrix @ solution``."""
    return ROUNDOFF_FACTOR * np.finfo(float).eps * \
        _norm(abs(matrix) @ np.abs(solution))


def _solve_checked(matrix, rhs, solve, tol):
    rhs_norm = _norm(rhs)
    solution = solve(rhs)
    for step in range(MAX_REFINEMENT_STEPS + 1):
        residual = rhs - matrix @ solution
        residual_norm = _norm(residual)
        if residual_norm <= max(tol * rhs_norm,
                                _roundoff(matrix, solution)):
            if step:
                LOGGER.debug('Residual %.3e reached after %d refinement '
                             'steps', residual_norm, step)
            return solution
        if step < MAX_REFINEMENT_STEPS:
            solution = solution + solve(residual)

    raise LinearSolverError('Residual %.3e exceeds %.1e * |b| = %.3e'
                            % (residual_norm, tol, tol * rhs_norm))


def _prepare(matrix, rhs):
    matrix = canonical(matrix)
    rhs = np.asarray(rhs, dtype=float)
    if matrix.shape != (rhs.shape[0], rhs.shape[0]) or rhs.ndim != 1:
        raise ValueError('Incompatible shapes %s and %s'
                         % (matrix.shape, rhs.shape))
    return matrix, rhs


def solve_spd(matrix, rhs, tol=DEFAULT_LINEAR_TOL, method='direct'):
    """Solve a symmetric positive definite system.

    :param matrix: SPD sparse matrix.
    :param rhs: Right-hand side.
    :param tol: Relative residual tolerance ``|Ax - b| <= tol |b|``.
    :param method: ``'direct'`` (sparse LU) or ``'cg'`` (Jacobi
                   preconditioned conjugate gradients).
    :return: Solution vector.
    """
    matrix, rhs = _prepare(matrix, rhs)
    if _norm(rhs) == 0:
        return np.zeros_like(rhs)

    if method == 'direct':
        solve = _factorize(matrix).solve
    elif method == 'cg':
        solve = _jacobi_cg_solver(matrix, tol)
    else:
        raise ValueError("method must be 'direct' or 'cg', got %r"
                         % (method,))
    return _solve_checked(matrix, rhs, solve, tol)


def solve_general(matrix, rhs, tol=DEFAULT_LINEAR_TOL):
    """Solve a nonsymmetric sparse system by sparse LU."""
    matrix, rhs = _prepare(matrix, rhs)
    if _norm(rhs) == 0:
        return np.zeros_like(rhs)
    return _solve_checked(matrix, rhs, _factorize(matrix).solve, tol)


def solve_saddle(mass, divergence, f, g, tol=DEFAULT_SCHUR_TOL,
                 check_tol=DEFAULT_LINEAR_TOL):
    """Solve ``M p + B^T y = f``, ``B p = g`` through the Schur complement.

    The SPD system ``B M^-1 B^T y = B M^-1 f - g`` is solved by conjugate
    gradients preconditioned with ``B diag(M)^-1 B^T``. A final correction
    with the same preconditioner makes ``B p = g`` hold to round-off.
    Residuals above ``check_tol`` are reduced by iterative refinement.

    :param mass: SPD (n, n) matrix ``M``.
    :param divergence: (m, n) matrix ``B`` of full row rank.
    :param tol: Relative tolerance of the Schur complement iteration.
    :param check_tol: Relative tolerance of the final residual checks.
    :return: ``(p, y)``
    """
    mass = canonical(mass)
    divergence = canonical(divergence)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    n_y, n_p = divergence.shape
    if mass.shape != (n_p, n_p) or f.shape != (n_p,) or g.shape != (n_y,):
        raise ValueError('Incompatible saddle point blocks')

    if _norm(f) == 0 and _norm(g) == 0:
        return np.zeros(n_p), np.zeros(n_y)

    mass_lu = _factorize(mass)
    diagonal = mass.diagonal()
    approximate = canonical(
        divergence @ sp.diags(1.0 / diagonal) @ divergence.T)
    try:
        approximate_lu = _factorize(approximate)
    except LinearSolverError as error:
        raise LinearSolverError('Singular Schur complement: %s'
                                % error) from error

    schur = spla.LinearOperator(
        (n_y, n_y),
        matvec=lambda y: divergence @ mass_lu.solve(divergence.T @ y))
    preconditioner = spla.LinearOperator(
        (n_y, n_y), matvec=approximate_lu.solve)
    max_iterations = max(200, n_y)

    def solve(f_part, g_part):
        rhs = divergence @ mass_lu.solve(f_part) - g_part
        if _norm(rhs) == 0:
            y = np.zeros(n_y)
        else:
            y, info = _cg(schur, rhs, tol, M=preconditioner,
                          maxiter=max_iterations)
            if info != 0:
                raise LinearSolverError(
                    'Schur complement CG did not converge within %d '
                    'iterations' % max_iterations)
        p = mass_lu.solve(f_part - divergence.T @ y)
        p = p + (divergence.T @ approximate_lu.solve(
            g_part - divergence @ p)) / diagonal
        return p, y

    p, y = solve(f, g)
    for step in range(MAX_REFINEMENT_STEPS + 1):
        balance_residual = f - mass @ p - divergence.T @ y
        constraint_residual = g - divergence @ p
        balance = _norm(balance_residual)
        balance_scale = _norm(f) + _norm(divergence.T @ y)
        constraint = _norm(constraint_residual)
        constraint_scale = _norm(g) + _norm(abs(divergence) @ abs(p))
        if balance <= max(check_tol * balance_scale, _roundoff(mass, p)) and \
                constraint <= check_tol * constraint_scale:
            if step:
                LOGGER.debug('Saddle point residuals %.3e / %.3e reached '
                             'after %d refinement steps', balance,
                             constraint, step)
            return p, y
        if step < MAX_REFINEMENT_STEPS:
            correction_p, correction_y = solve(balance_residual,
                                               constraint_residual)
            p = p + correction_p
            y = y + correction_y

    raise LinearSolverError(
        'Saddle point residuals %.3e / %.3e exceed tolerance %.1e'
        % (balance, constraint, check_tol))


def solve_bordered(matrix, c, b, beta, tol=DEFAULT_LINEAR_TOL):
    """Solve ``A x + mu c = b``, ``c^T x = beta`` by block elimination.

    :param matrix: SPD (at least on the kernel of ``c^T``) matrix ``A``.
    :param c: Constraint vector.
    :param b: Right-hand side.
    :param beta: Constraint value.
    :return: ``(x, mu)``
    """
    matrix, b = _prepare(matrix, b)
    c = np.asarray(c, dtype=float)
    if c.shape != b.shape:
        raise ValueError('Constraint vector has shape %s, expected %s'
                         % (c.shape, b.shape))

    lu = _factorize(matrix)
    x_b = lu.solve(b)
    x_c = lu.solve(c)
    denominator = float(c @ x_c)
    if not np.isfinite(denominator) or \
            abs(denominator) <= np.finfo(float).eps * _norm(c) * _norm(x_c):
        raise LinearSolverError('Degenerate constraint: c^T A^-1 c = %r'
                                % denominator)

    mu = (float(c @ x_b) - beta) / denominator
    x = x_b - mu * x_c

    balance = _norm(matrix @ x + mu * c - b)
    constraint = abs(float(c @ x) - beta)
    if balance > max(tol * (_norm(b) + abs(mu) * _norm(c)),
                     _roundoff(matrix, x)) or \
            constraint > tol * max(abs(beta), _norm(c) * _norm(x)):
        raise LinearSolverError(
            'Bordered system residuals %.3e / %.3e exceed tolerance %.1e'
            % (balance, constraint, tol))
    return x, mu
