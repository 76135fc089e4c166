DOMAIN_KINDS = ('unit_square', 'l_shape', 'slit')

# Cells per side of the structured initial grid, chosen so that every
# force support and mould kink of the benchmarks lies on grid lines.
DOMAIN_GRID_CELLS = {
    'unit_square': 1,
    'l_shape': 6,
    'slit': 4,
}

DOMAIN_AREAS = {
    'unit_square': 1.0,
    'l_shape': 0.75,
    'slit': 1.0,
}

DEFAULT_QUADRATURE_ORDER = 4

DEFAULT_TOL_NEWTON = 1e-9
DEFAULT_MAX_NEWTON_ITERATIONS = 50
DEFAULT_MAX_LINE_SEARCH_STEPS = 12
DEFAULT_LINEAR_TOL = 1e-10
DEFAULT_SCHUR_TOL = 1e-12

DEFAULT_C_GAMMA = 0.25
DEFAULT_C_ETA = 0.5
DEFAULT_THETA = 0.1
DEFAULT_GAMMA_MIN_UPDATE = 10.0
DEFAULT_NRDOF_MAX = 50000
DEFAULT_GAMMA_RATIO = 10.0

ACTIONS = ('refine', 'gamma_update', 'stop')

PROBLEM_KINDS = ('obstacle', 'thermoforming', 'membrane')
RUN_MODES = ('adaptive', 'uniform', 'both')

CSV_LEADING_COLUMNS = ['n', 'ell', 'gamma', 'nrdof', 'eta_sq']
CSV_TRAILING_COLUMNS = ['dgamma', 'osc_primal', 'osc_dual', 'newton_iters',
                        'action']
OSCILLATION_KINDS = ('primal', 'dual')

# The rate fit uses the last decades of the number of dofs of a segment.
FIT_DECADES = 2

VTK_HEADER = '# vtk DataFile Version 2.0'
VTK_TRIANGLE = 5

SUMMARY_FILENAME = 'summary.txt'
