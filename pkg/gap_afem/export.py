"""Writers of run artifacts: CSV tables, legacy VTK meshes and summaries."""
import csv
import logging
from functools import singledispatch

import numpy as np

from .constant import (
    CSV_LEADING_COLUMNS,
    CSV_TRAILING_COLUMNS,
    FIT_DECADES,
    OSCILLATION_KINDS,
    VTK_HEADER,
    VTK_TRIANGLE,
)
from .fem_spaces import P0Field, RT0Field, S1Field, rt0_evaluate
from .file_handler import LocalFile
from .solvers import MembraneState, ObstacleState, ThermoformingState


LOGGER = logging.getLogger(__name__)


def _format(value):
    return '%.17g' % value


def _vtk_lines(mesh, fields):
    point_fields = []
    cell_fields = []
    for name, field in fields.items():
        if ' ' in name:
            raise ValueError('VTK field names cannot contain spaces: %r'
                             % (name,))
        if isinstance(field, (S1Field, P0Field, RT0Field)):
            if field.mesh is not mesh:
                raise ValueError('Field %s is defined on another mesh' % name)
            if isinstance(field, RT0Field):
                values = rt0_evaluate(field, mesh.centroids)
            else:
                values = field.values
        else:
            values = np.asarray(field, dtype=float)

        if isinstance(field, S1Field) or (
                not isinstance(field, (P0Field, RT0Field)) and
                values.shape[0] == mesh.n_vertices and
                values.shape[0] != mesh.n_triangles):
            target, length = point_fields, mesh.n_vertices
        else:
            target, length = cell_fields, mesh.n_triangles
        if values.shape[0] != length or values.ndim not in (1, 2):
            raise ValueError('Field %s has shape %s, expected %d values'
                             % (name, values.shape, length))
        target.append((name, values))

    lines = [
        VTK_HEADER,
        'gap-afem mesh',
        'ASCII',
        'DATASET UNSTRUCTURED_GRID',
        'POINTS %d double' % mesh.n_vertices,
    ]
    lines.extend('%s %s 0' % (_format(x), _format(y))
                 for x, y in mesh.vertices)
    lines.append('CELLS %d %d' % (mesh.n_triangles, 4 * mesh.n_triangles))
    lines.extend('3 %d %d %d' % tuple(triangle)
                 for triangle in mesh.triangles)
    lines.append('CELL_TYPES %d' % mesh.n_triangles)
    lines.extend([str(VTK_TRIANGLE)] * mesh.n_triangles)

    for keyword, count, data in (('POINT_DATA', mesh.n_vertices, point_fields),
                                 ('CELL_DATA', mesh.n_triangles, cell_fields)):
        if not data:
            continue
        lines.append('%s %d' % (keyword, count))
        for name, values in data:
            if values.ndim == 1:
                lines.append('SCALARS %s double 1' % name)
                lines.append('LOOKUP_TABLE default')
                lines.extend(_format(value) for value in values)
            else:
                lines.append('VECTORS %s double' % name)
                lines.extend('%s %s 0' % (_format(x), _format(y))
                             for x, y in values)
    return lines


def export_vtk(path, mesh, fields=None):
    """Write a mesh and fields as a legacy ASCII VTK unstructured grid.

    S1 fields become POINT_DATA, P0 fields CELL_DATA and RT0 fields cell
    vectors evaluated at the centroids. Plain arrays are assigned by
    length. Fields are written in the given order.

    :param path: Local path or S3 URL.
    :param mesh: Mesh
    :param fields: Mapping of names to fields or arrays.
    """
    lines = _vtk_lines(mesh, dict(fields or {}))
    with LocalFile(path, upload=True) as local_path:
        with open(local_path, 'w') as file_obj:
            file_obj.write('\n'.join(lines) + '\n')
    LOGGER.info('Wrote %s', path)


def csv_columns(term_names):
    return CSV_LEADING_COLUMNS + list(term_names) + CSV_TRAILING_COLUMNS


def _term_names(records):
    names = []
    for record in records:
        for name in record.terms:
            if name not in names:
                names.append(name)
    return names


def write_csv(path, run_log, term_names=None):
    """Write one row per record of ``run_log``.

    :param term_names: Estimator term columns, by default every term name
                       found in the records in order of appearance.
    """
    if term_names is None:
        term_names = _term_names(run_log.records)
    with LocalFile(path, upload=True) as local_path:
        with open(local_path, 'w', newline='') as file_obj:
            writer = csv.writer(file_obj, lineterminator='\n')
            writer.writerow(csv_columns(term_names))
            for record in run_log.records:
                writer.writerow(
                    [record.n, record.ell, _format(record.gamma),
                     record.nrdof, _format(record.eta_sq)] +
                    [_format(record.terms.get(name, float('nan')))
                     for name in term_names] +
                    [_format(record.dgamma)] +
                    [_format(record.oscillation.get(kind, float('nan')))
                     for kind in OSCILLATION_KINDS] +
                    [record.newton_iterations, record.action])
    LOGGER.info('Wrote %s', path)


def _fit(records):
    points = [(record.nrdof, record.eta_sq) for record in records
              if record.action == 'refine' and record.eta_sq > 0 and
              np.isfinite(record.eta_sq)]
    if points:
        smallest = max(nrdof for nrdof, _ in points) / 10.0 ** FIT_DECADES
        points = [point for point in points if point[0] >= smallest]
    nrdofs = sorted(set(nrdof for nrdof, _ in points))
    if len(nrdofs) < 2:
        return float('nan'), True
    log_nrdof = np.log([nrdof for nrdof, _ in points])
    log_eta = 0.5 * np.log([eta_sq for _, eta_sq in points])
    slope = np.polyfit(log_nrdof, log_eta, 1)[0]
    return float(-slope), False


def fit_rate(run_log):
    """Return the convergence rate of the estimator in the number of dofs.

    The rate is minus the least-squares slope of ``log eta`` against
    ``log nrdof`` over the refinement records of the final gamma segment
    whose number of dofs lies within ``FIT_DECADES`` decades of the largest
    one, leaving out the preasymptotic coarse meshes.

    :return: ``(rate, degenerate)``; degenerate (rate NaN) when fewer than
             two distinct positive points exist.
    """
    segments = run_log.segments()
    if not segments:
        return float('nan'), True
    return _fit(segments[-1])


def segment_rates(run_log):
    """Return ``(gamma, rate, degenerate)`` for every gamma segment."""
    return [(segment[0].gamma,) + _fit(segment)
            for segment in run_log.segments()]


def _final_oscillation(estimated, kind):
    if not estimated:
        return 'nan'
    return _format(estimated[-1].oscillation.get(kind, float('nan')))


def summarize(run_log):
    """Return the ordered summary entries of a run."""
    estimated = [record for record in run_log.records
                 if np.isfinite(record.eta_sq)]
    last = run_log.records[-1] if run_log.records else None
    rate, degenerate = fit_rate(run_log)
    return [
        ('records', len(run_log.records)),
        ('final_gamma', _format(last.gamma) if last else 'nan'),
        ('final_nrdof', last.nrdof if last else 0),
        ('final_eta_sq',
         _format(estimated[-1].eta_sq) if estimated else 'nan'),
        ('final_osc_primal', _final_oscillation(estimated, 'primal')),
        ('final_osc_dual', _final_oscillation(estimated, 'dual')),
        ('gamma_updates', sum(record.action == 'gamma_update'
                              for record in run_log.records)),
        ('rate', _format(rate)),
        ('rate_degenerate', str(degenerate).lower()),
    ] + [
        ('segment_%d_rate' % index, '%s:%s' % (_format(gamma), _format(rate)))
        for index, (gamma, rate, _) in enumerate(segment_rates(run_log))
    ]


def write_summary(path, entries):
    """Write ``key=value`` lines.

    :param entries: Iterable of ``(key, value)`` pairs.
    """
    with LocalFile(path, upload=True) as local_path:
        with open(local_path, 'w') as file_obj:
            for key, value in entries:
                file_obj.write('%s=%s\n' % (key, value))
    LOGGER.info('Wrote %s', path)


@singledispatch
def state_fields(state):
    """Return the named primal fields of a state."""
    raise TypeError('No fields for %s' % type(state).__name__)


@state_fields.register
def _(state: ObstacleState):
    return {'y': state.y, 'psi': state.psi, 'f': state.f}


@state_fields.register
def _(state: ThermoformingState):
    return {'u': state.u, 'T': state.T, 'phi0': state.params.phi0,
            'gap': S1Field(state.mesh, state.gap())}


@state_fields.register
def _(state: MembraneState):
    return {'u1': state.u1, 'u2': state.u2, 'm': state.m,
            'delta': state.delta}


def run_fields(run_log):
    """Return the fields of the last state of a run, with the estimator
    localization and dual fields when they belong to the same mesh."""
    state = run_log.final_state
    fields = state_fields(state)
    estimate = run_log.final_estimate
    if estimate is None or estimate.per_element.shape[0] != \
            state.mesh.n_triangles:
        return fields
    if all(dual.mesh is state.mesh for dual in estimate.duals.values()):
        fields['eta_sq'] = P0Field(state.mesh, estimate.per_element)
        fields.update(estimate.duals)
    return fields
