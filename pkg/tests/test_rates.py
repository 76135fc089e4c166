import math
import os
from dataclasses import replace

import pytest

from gap_afem.adaptivity import run_adaptive, run_uniform
from gap_afem.config import build_problem, load_config
from gap_afem.export import fit_rate


CONFIG_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')
GAMMA = 1e4


def _load(name):
    config = load_config(os.path.join(CONFIG_DIR, name + '.cfg'))
    return config, build_problem(config)


def _adaptive_rate(name, nrdof_max=3000):
    config, problem = _load(name)
    # A single segment at fixed gamma, ended by the dof limit
    adaptive = replace(config.adaptive, gamma0=GAMMA, gamma_max=GAMMA,
                       c_eta=0.01, theta=0.3, nrdof_max=nrdof_max)
    run_log = run_adaptive(problem, adaptive)

    assert {record.gamma for record in run_log.records} == {GAMMA}
    rate, degenerate = fit_rate(run_log)
    assert not degenerate
    return rate


def _uniform_rate(name, nrdof_max=15000):
    config, problem = _load(name)
    run_log = run_uniform(problem, GAMMA,
                          replace(config.adaptive, nrdof_max=nrdof_max))

    rate, degenerate = fit_rate(run_log)
    assert not degenerate
    return rate


@pytest.mark.parametrize('name', [
    'obstacle_bump',
    'thermoforming',
    'membrane_l_shape',
    'membrane_slit',
])
def test_adaptive_rate(name):
    assert 0.3 <= _adaptive_rate(name) <= 0.8


@pytest.mark.parametrize('name, low, high', [
    ('thermoforming', 0.35, 0.7),
    ('membrane_l_shape', 0.25, 0.65),
    ('membrane_slit', 0.15, 0.5),
])
def test_uniform_rate(name, low, high):
    assert low <= _uniform_rate(name) <= high


@pytest.mark.parametrize('name', ['membrane_l_shape', 'membrane_slit'])
def test_adaptivity_beats_uniform_refinement_on_corners(name):
    assert _adaptive_rate(name) > _uniform_rate(name)


def test_zero_estimator_rate_is_degenerate():
    config, problem = _load('obstacle_zero')
    run_log = run_adaptive(problem, config.adaptive)

    rate, degenerate = fit_rate(run_log)
    assert degenerate
    assert math.isnan(rate)
    assert run_log.records[-1].gamma == config.adaptive.gamma_max
