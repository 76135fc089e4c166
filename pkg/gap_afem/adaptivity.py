"""Doerfler marking, penalty updates and the joint adaptive loop."""
import logging
from dataclasses import dataclass, field
from typing import Any, List

import numpy as np

from .constant import (
    ACTIONS,
    DEFAULT_C_ETA,
    DEFAULT_C_GAMMA,
    DEFAULT_GAMMA_MIN_UPDATE,
    DEFAULT_MAX_NEWTON_ITERATIONS,
    DEFAULT_NRDOF_MAX,
    DEFAULT_THETA,
    DEFAULT_TOL_NEWTON,
)
from .mesh import refine, refine_uniform
from .sparse_linalg import LinearSolverError
from .solvers import NewtonConvergenceError


LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptiveConfig:
    gamma0: float = 100.0
    gamma_max: float = 1e6
    c_gamma: float = DEFAULT_C_GAMMA
    c_eta: float = DEFAULT_C_ETA
    theta: float = DEFAULT_THETA
    gamma_min_update: float = DEFAULT_GAMMA_MIN_UPDATE
    nrdof_max: int = DEFAULT_NRDOF_MAX
    tol_newton: float = DEFAULT_TOL_NEWTON
    max_newton_iterations: int = DEFAULT_MAX_NEWTON_ITERATIONS

    def __post_init__(self):
        checks = [
            ('gamma0', self.gamma0 > 0),
            ('gamma_max', self.gamma_max > 0),
            ('c_gamma', self.c_gamma > 0),
            ('c_eta', 0 < self.c_eta < 1),
            ('theta', 0 < self.theta < 1),
            ('gamma_min_update', self.gamma_min_update > 0),
            ('nrdof_max', self.nrdof_max >= 0),
            ('tol_newton', self.tol_newton > 0),
            ('max_newton_iterations', self.max_newton_iterations >= 1),
        ]
        for name, valid in checks:
            if not valid:
                raise ValueError('Invalid %s: %r'
                                 % (name, getattr(self, name)))


@dataclass(frozen=True)
class RunRecord:
    n: int
    ell: int
    gamma: float
    nrdof: int
    eta_sq: float
    terms: dict
    dgamma: float
    newton_iterations: int
    action: str
    oscillation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError('Unknown action %r, expected one of %s'
                             % (self.action, ACTIONS))


@dataclass
class RunLog:
    """Records of an adaptive or uniform run and its last state."""

    records: List[RunRecord] = field(default_factory=list)
    final_state: Any = None
    final_estimate: Any = None

    def append(self, record):
        self.records.append(record)
        LOGGER.info('n=%d ell=%d gamma=%.6g nrdof=%d eta^2=%.6e action=%s',
                    record.n, record.ell, record.gamma, record.nrdof,
                    record.eta_sq, record.action)

    def segments(self):
        """Group estimated records by consecutive penalty parameter."""
        groups = []
        for record in self.records:
            if np.isnan(record.eta_sq):
                continue
            if groups and groups[-1][0].gamma == record.gamma:
                groups[-1].append(record)
            else:
                groups.append([record])
        return groups


class AdaptiveRunError(RuntimeError):
    """Raised when a solve fails inside a run, carrying the partial log."""

    def __init__(self, message, run_log):
        super().__init__(message)
        self.run_log = run_log


def doerfler_mark(indicators, theta):
    """Return the smallest greedy set carrying a ``theta`` fraction.

    Elements are taken by decreasing indicator, ties by increasing index,
    until their sum reaches ``theta`` times the total.

    :param indicators: Nonnegative indicator per element.
    :param theta: Bulk parameter in (0, 1).
    :return: Set of element indices, empty when all indicators vanish.
    """
    indicators = np.asarray(indicators, dtype=float)
    if not 0 < theta < 1:
        raise ValueError('theta must lie in (0, 1), got %r' % (theta,))
    if np.any(indicators < 0):
        raise ValueError('Indicators must be nonnegative')

    total = indicators.sum()
    if total == 0:
        return set()

    order = np.lexsort((np.arange(indicators.size), -indicators))
    cumulative = np.cumsum(indicators[order])
    count = int(np.searchsorted(cumulative, theta * total, side='left')) + 1
    return set(int(index) for index in order[:min(count, indicators.size)])


def gamma_update(gamma, eta_sq, dgamma, config):
    """Return the next penalty parameter.

    With a positive derivative proxy the increment is
    ``max(gamma_min_update, c_gamma * eta_sq / dgamma)``, otherwise gamma
    grows by the factor ``1 + c_gamma``.
    """
    if not gamma > 0:
        raise ValueError('gamma must be positive, got %r' % (gamma,))
    if dgamma > 0:
        return gamma + max(config.gamma_min_update,
                           config.c_gamma * eta_sq / dgamma)
    return (1 + config.c_gamma) * gamma


def _solve(problem, mesh, gamma, config, initial, run_log):
    try:
        return problem.solve(mesh, gamma, config.tol_newton, initial,
                             config.max_newton_iterations)
    except (NewtonConvergenceError, LinearSolverError) as error:
        raise AdaptiveRunError('Solve failed at gamma=%g with %d dofs: %s'
                               % (gamma, problem.nrdof(mesh), error),
                               run_log) from error


def _estimate(problem, state, run_log):
    try:
        return problem.estimate(state)
    except LinearSolverError as error:
        raise AdaptiveRunError('Estimation failed at gamma=%g: %s'
                               % (state.gamma, error), run_log) from error


def _record(n, ell, gamma, nrdof, state, estimate, action):
    return RunRecord(
        n=n,
        ell=ell,
        gamma=float(gamma),
        nrdof=nrdof,
        eta_sq=estimate.total if estimate is not None else float('nan'),
        terms=dict(estimate.terms) if estimate is not None else {},
        dgamma=estimate.dgamma if estimate is not None else float('nan'),
        newton_iterations=state.newton_iterations,
        action=action,
        oscillation=dict(estimate.oscillation) if estimate is not None
        else {},
    )


def run_adaptive(problem, config):
    """Run the joint mesh refinement and penalty update loop.

    For every penalty parameter the mesh is refined by Doerfler marking
    until the estimator drops below ``c_eta`` times the reference value of
    the previous update; then the reference is reset and gamma is updated,
    keeping the current mesh. Updates are capped at ``gamma_max`` so the
    last segment runs at ``gamma_max``; the run stops when that segment
    meets the reduction criterion or the number of degrees of freedom
    reaches its limit.

    :param problem: Problem with ``initial_mesh``, ``solve``, ``estimate``
                    and ``nrdof``.
    :param config: AdaptiveConfig
    :return: RunLog
    """
    run_log = RunLog()
    mesh = problem.initial_mesh()
    gamma = config.gamma0
    state = None
    eta_ref = None
    n = 0

    while True:
        ell = 0
        while True:
            state = _solve(problem, mesh, gamma, config, state, run_log)
            run_log.final_state = state
            nrdof = problem.nrdof(mesh)

            if nrdof >= config.nrdof_max:
                run_log.append(
                    _record(n, ell, gamma, nrdof, state, None, 'stop'))
                return run_log

            estimate = _estimate(problem, state, run_log)
            run_log.final_estimate = estimate
            eta = estimate.eta
            if eta_ref is None:
                eta_ref = eta

            if eta <= config.c_eta * eta_ref:
                if gamma >= config.gamma_max:
                    run_log.append(_record(n, ell, gamma, nrdof, state,
                                           estimate, 'stop'))
                    return run_log
                eta_ref = eta
                run_log.append(_record(n, ell, gamma, nrdof, state, estimate,
                                       'gamma_update'))
                gamma = min(gamma_update(gamma, estimate.total,
                                         estimate.dgamma, config),
                            config.gamma_max)
                break

            run_log.append(
                _record(n, ell, gamma, nrdof, state, estimate, 'refine'))
            marked = doerfler_mark(estimate.per_element, config.theta)
            mesh = refine(mesh, marked)
            ell += 1
        n += 1


def run_uniform(problem, gamma, config):
    """Solve and estimate on uniformly refined meshes at fixed gamma.

    :return: RunLog with one ``refine`` record per level and a final
             ``stop`` record once ``nrdof_max`` is reached.
    """
    run_log = RunLog()
    mesh = problem.initial_mesh()
    state = None
    ell = 0

    while True:
        state = _solve(problem, mesh, gamma, config, state, run_log)
        run_log.final_state = state
        nrdof = problem.nrdof(mesh)
        if nrdof >= config.nrdof_max:
            run_log.append(_record(0, ell, gamma, nrdof, state, None, 'stop'))
            return run_log

        estimate = _estimate(problem, state, run_log)
        run_log.final_estimate = estimate
        run_log.append(
            _record(0, ell, gamma, nrdof, state, estimate, 'refine'))
        mesh = refine_uniform(mesh)
        ell += 1
