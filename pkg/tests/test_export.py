import csv

import numpy as np
import pytest

from gap_afem.adaptivity import AdaptiveConfig, RunLog, RunRecord, run_uniform
from gap_afem.export import (
    csv_columns,
    export_vtk,
    fit_rate,
    run_fields,
    segment_rates,
    state_fields,
    summarize,
    write_csv,
    write_summary,
)
from gap_afem.fem_spaces import P0Field, RT0Field, S1Field
from gap_afem.mesh import DomainSpec, create_domain
from gap_afem.problems import ObstacleProblem, ParaboloidObstacle


def _read_lines(path):
    with open(path) as file_obj:
        return file_obj.read().splitlines()


def test_vtk_of_two_triangles(tmp_path):
    mesh = create_domain(DomainSpec('unit_square', 0))
    path = str(tmp_path / 'square.vtk')
    export_vtk(path, mesh, {'id': P0Field(mesh, [1.0, 2.0])})
    lines = _read_lines(path)

    assert lines[0] == '# vtk DataFile Version 2.0'
    assert lines[2] == 'ASCII'
    assert lines[3] == 'DATASET UNSTRUCTURED_GRID'
    assert lines[4] == 'POINTS 4 double'
    assert lines[5] == '0 0 0'
    cells = lines.index('CELLS 2 8')
    assert lines[cells + 1:cells + 3] == \
        ['3 %d %d %d' % tuple(triangle) for triangle in mesh.triangles]
    types = lines.index('CELL_TYPES 2')
    assert lines[types + 1:types + 3] == ['5', '5']
    data = lines.index('CELL_DATA 2')
    assert lines[data + 1:] == ['SCALARS id double 1', 'LOOKUP_TABLE default',
                                '1', '2']
    assert 'POINT_DATA 4' not in lines


def test_vtk_is_deterministic(tmp_path):
    mesh = create_domain(DomainSpec('l_shape', 1))
    fields = {
        'x': S1Field(mesh, mesh.vertices[:, 0]),
        'area': P0Field(mesh, mesh.areas),
        'flux': RT0Field(mesh, np.linspace(-1.0, 1.0, mesh.n_edges)),
    }
    first, second = tmp_path / 'a.vtk', tmp_path / 'b.vtk'
    export_vtk(str(first), mesh, fields)
    export_vtk(str(second), mesh, fields)

    assert first.read_bytes() == second.read_bytes()
    lines = _read_lines(str(first))
    points = next(line for line in lines if line.startswith('POINTS'))
    assert int(points.split()[1]) == mesh.n_vertices
    assert 'POINT_DATA %d' % mesh.n_vertices in lines
    assert 'CELL_DATA %d' % mesh.n_triangles in lines
    assert 'VECTORS flux double' in lines
    # Vertex coordinates are written losslessly
    start = lines.index(points) + 1
    coordinates = np.array([line.split()[:2]
                            for line in lines[start:start + mesh.n_vertices]],
                           dtype=float)
    np.testing.assert_array_equal(coordinates, mesh.vertices)


def test_vtk_assigns_plain_arrays_by_length(tmp_path):
    mesh = create_domain(DomainSpec('unit_square', 1))
    path = str(tmp_path / 'arrays.vtk')
    export_vtk(path, mesh, {'nodal': np.arange(mesh.n_vertices),
                            'cells': np.arange(mesh.n_triangles)})
    lines = _read_lines(path)

    point_data = lines.index('POINT_DATA %d' % mesh.n_vertices)
    cell_data = lines.index('CELL_DATA %d' % mesh.n_triangles)
    assert lines[point_data + 1] == 'SCALARS nodal double 1'
    assert lines[cell_data + 1] == 'SCALARS cells double 1'


def test_vtk_rejects_mismatched_fields(tmp_path):
    mesh = create_domain(DomainSpec('unit_square', 1))
    other = create_domain(DomainSpec('unit_square', 1))
    path = str(tmp_path / 'bad.vtk')

    with pytest.raises(ValueError):
        export_vtk(path, mesh, {'bad': np.zeros(3)})
    with pytest.raises(ValueError):
        export_vtk(path, mesh, {'foreign': P0Field(other, other.areas)})
    with pytest.raises(ValueError):
        export_vtk(path, mesh, {'two words': P0Field(mesh, mesh.areas)})
    assert not (tmp_path / 'bad.vtk').exists()


def _record(n, gamma, nrdof, eta_sq, action='refine', terms=None,
            oscillation=None):
    return RunRecord(n=n, ell=0, gamma=gamma, nrdof=nrdof, eta_sq=eta_sq,
                     terms=terms or {}, dgamma=0.5, newton_iterations=2,
                     action=action, oscillation=oscillation or {})


def _synthetic_log():
    run_log = RunLog()
    # eta = nrdof^(-1/4) at gamma 10, then eta = 2 nrdof^(-1/2) at gamma 20
    for nrdof in [10, 100]:
        run_log.append(_record(0, 10.0, nrdof, nrdof ** -0.5))
    run_log.append(_record(0, 10.0, 1000, 1000 ** -0.5, 'gamma_update'))
    for nrdof in [1000, 4000, 16000]:
        run_log.append(_record(1, 20.0, nrdof, 4.0 / nrdof))
    run_log.append(_record(1, 20.0, 64000, float('nan'), 'stop'))
    return run_log


def test_fit_rate_of_final_segment():
    rate, degenerate = fit_rate(_synthetic_log())
    assert not degenerate
    assert rate == pytest.approx(0.5)

    rates = segment_rates(_synthetic_log())
    assert [gamma for gamma, _, _ in rates] == [10.0, 20.0]
    assert rates[0][1] == pytest.approx(0.25)


def test_fit_rate_degenerate_cases():
    rate, degenerate = fit_rate(RunLog())
    assert degenerate and np.isnan(rate)

    run_log = RunLog()
    for nrdof in [10, 20, 40]:
        run_log.append(_record(0, 1.0, nrdof, 0.0, 'gamma_update'))
    assert fit_rate(run_log)[1]

    run_log = RunLog()
    run_log.append(_record(0, 1.0, 10, 1.0))
    run_log.append(_record(0, 1.0, 10, 0.5))
    assert fit_rate(run_log)[1]


def test_fit_rate_ignores_preasymptotic_meshes():
    run_log = RunLog()
    # A plateau on coarse meshes, then eta = nrdof^(-1/2)
    for nrdof in [10, 20, 40]:
        run_log.append(_record(0, 1.0, nrdof, 0.01))
    for nrdof in [1000, 4000, 16000, 64000]:
        run_log.append(_record(0, 1.0, nrdof, 1.0 / nrdof))

    rate, degenerate = fit_rate(run_log)
    assert not degenerate
    assert rate == pytest.approx(0.5)


def test_write_csv(tmp_path):
    run_log = RunLog()
    run_log.append(_record(0, 100.0, 9, 0.25,
                           terms={'gradient_gap': 0.2, 'interface': 0.05},
                           oscillation={'primal': 0.125, 'dual': 0.0}))
    run_log.append(_record(0, 100.0, 49, float('nan'), 'stop'))
    path = str(tmp_path / 'run.csv')
    write_csv(path, run_log)

    with open(path, newline='') as file_obj:
        rows = list(csv.reader(file_obj))
    assert rows[0] == ['n', 'ell', 'gamma', 'nrdof', 'eta_sq', 'gradient_gap',
                       'interface', 'dgamma', 'osc_primal', 'osc_dual',
                       'newton_iters', 'action']
    assert rows[1] == ['0', '0', '100', '9', '0.25', '0.20000000000000001',
                       '0.050000000000000003', '0.5', '0.125', '0', '2',
                       'refine']
    assert rows[2][4:7] == ['nan', 'nan', 'nan']
    assert rows[2][8:10] == ['nan', 'nan']
    assert rows[2][-1] == 'stop'
    assert csv_columns([]) == ['n', 'ell', 'gamma', 'nrdof', 'eta_sq',
                               'dgamma', 'osc_primal', 'osc_dual',
                               'newton_iters', 'action']


def test_summary(tmp_path):
    entries = dict(summarize(_synthetic_log()))

    assert entries['records'] == 7
    assert entries['final_gamma'] == '20'
    assert entries['final_nrdof'] == 64000
    assert float(entries['final_eta_sq']) == pytest.approx(4.0 / 16000)
    assert entries['gamma_updates'] == 1
    assert float(entries['rate']) == pytest.approx(0.5)
    assert entries['rate_degenerate'] == 'false'
    assert entries['segment_1_rate'].startswith('20:')

    path = str(tmp_path / 'summary.txt')
    write_summary(path, summarize(_synthetic_log()))
    lines = _read_lines(path)
    assert lines[0] == 'records=7'
    assert 'rate_degenerate=false' in lines


def test_summary_reports_final_oscillation():
    run_log = RunLog()
    run_log.append(_record(0, 1.0, 9, 0.5,
                           oscillation={'primal': 0.25, 'dual': 0.125}))
    run_log.append(_record(0, 1.0, 49, 0.25,
                           oscillation={'primal': 0.0625, 'dual': 0.5}))
    run_log.append(_record(0, 1.0, 225, float('nan'), 'stop'))
    entries = dict(summarize(run_log))

    assert entries['final_osc_primal'] == '0.0625'
    assert entries['final_osc_dual'] == '0.5'
    assert dict(summarize(_synthetic_log()))['final_osc_primal'] == 'nan'


def test_summary_of_zero_estimator_is_degenerate():
    run_log = RunLog()
    run_log.append(_record(0, 1.0, 49, 0.0, 'gamma_update'))
    run_log.append(_record(1, 1.25, 49, float('nan'), 'stop'))
    entries = dict(summarize(run_log))

    assert entries['rate'] == 'nan'
    assert entries['rate_degenerate'] == 'true'
    assert entries['final_eta_sq'] == '0'
    assert entries['final_osc_primal'] == 'nan'


def test_run_fields_export(tmp_path):
    problem = ObstacleProblem(DomainSpec('unit_square', 2),
                              ParaboloidObstacle(0.3, 2.0), -5.0)
    run_log = run_uniform(problem, 100.0, AdaptiveConfig(nrdof_max=40))
    fields = run_fields(run_log)

    # The last estimate belongs to the previous mesh
    assert sorted(fields) == ['f', 'psi', 'y']

    run_log.final_estimate = problem.estimate(run_log.final_state)
    fields = run_fields(run_log)
    assert sorted(fields) == ['eta_sq', 'f', 'p', 'psi', 'y', 'z']

    path = str(tmp_path / 'state.vtk')
    export_vtk(path, run_log.final_state.mesh, fields)
    lines = _read_lines(path)
    assert 'SCALARS eta_sq double 1' in lines
    assert 'VECTORS p double' in lines


def test_state_fields_dispatch():
    with pytest.raises(TypeError):
        state_fields(object())
