"""Experiment configuration files.

A configuration is a text file of ``key=value`` pairs, several per line if
needed, with shell quoting and ``#`` comments. Problem specific parameters
go below a ``[obstacle]``, ``[thermoforming]`` or ``[membrane]`` header::

    problem=membrane mode=both
    domain=slit initial_refinements=1
    gamma0=100 gamma_max=1e6 theta=0.1 c_gamma=0.1 nrdof_max=50000

    [membrane]
    alpha=2 f_const_1=1000 f_const_2=-1000
"""
import dataclasses
import logging
import shlex
from dataclasses import dataclass, field
from os.path import basename, splitext
from typing import Optional

from .adaptivity import AdaptiveConfig
from .constant import DEFAULT_GAMMA_RATIO, DOMAIN_KINDS, PROBLEM_KINDS, \
    RUN_MODES
from .file_handler import LocalFile
from .mesh import DomainSpec
from .problems import (
    MembraneProblem,
    ObstacleProblem,
    ParaboloidObstacle,
    ThermoformingProblem,
)


LOGGER = logging.getLogger(__name__)

BOOLEANS = {'true': True, 'yes': True, '1': True,
            'false': False, 'no': False, '0': False}

ADAPTIVE_KEYS = {
    config_field.name: config_field.type
    for config_field in dataclasses.fields(AdaptiveConfig)
}

TOP_LEVEL_KEYS = dict(
    problem=str,
    mode=str,
    domain=str,
    initial_refinements=int,
    gamma_ratio=float,
    export_vtk=bool,
    **ADAPTIVE_KEYS
)

SECTION_KEYS = {
    'obstacle': dict(psi_height=float, psi_curvature=float,
                     psi_center_x=float, psi_center_y=float, f=float),
    'thermoforming': dict(k=float, f=float, g_scale=float, g_rate=float,
                          lmult=float, mould_height=float),
    'membrane': dict(alpha=float, f_const_1=float, f_const_2=float),
}


class ConfigurationError(ValueError):
    """Raised on a malformed configuration, pointing at the faulty line."""

    def __init__(self, message, path='<config>', lineno=None):
        self.path = path
        self.lineno = lineno
        location = path if lineno is None else '%s:%d' % (path, lineno)
        super().__init__('%s: %s' % (location, message))


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment.

    :param name: Stem of the artifact file names.
    :param parameters: Problem specific parameters of the ``problem``
                       section.
    """

    name: str
    problem: str
    mode: str = 'adaptive'
    domain: Optional[str] = None
    initial_refinements: Optional[int] = None
    adaptive: AdaptiveConfig = AdaptiveConfig()
    gamma_ratio: float = DEFAULT_GAMMA_RATIO
    export_vtk: bool = True
    parameters: dict = field(default_factory=dict)

    def gamma_ladder(self):
        """Return the uniform sweep penalties ``gamma0 * ratio^i`` up to
        ``gamma_max``."""
        gammas = [self.adaptive.gamma0]
        while gammas[-1] * self.gamma_ratio <= self.adaptive.gamma_max:
            gammas.append(gammas[-1] * self.gamma_ratio)
        return gammas


def _convert(kind, key, text):
    if kind is bool:
        if text.lower() not in BOOLEANS:
            raise ValueError('%s must be a boolean, got %r' % (key, text))
        return BOOLEANS[text.lower()]
    try:
        return kind(text)
    except ValueError:
        raise ValueError('%s must be of type %s, got %r'
                         % (key, kind.__name__, text)) from None


def _parse_parameters(text):
    """Return the ``key=value`` pairs of one line.

    ``a=1 b='two words'`` returns ``[('a', '1'), ('b', 'two words')]``.
    """
    lexer = shlex.shlex(text, posix=True, punctuation_chars='=')
    lexer.wordchars += '+:,'
    tokens = list(lexer)
    if len(tokens) % 3 != 0:
        raise ValueError('Expected key=value pairs, got %r' % text.strip())

    pairs = []
    for start in range(0, len(tokens), 3):
        key, equal, value = tokens[start:start + 3]
        if equal != '=' or key == '=' or value == '=':
            raise ValueError('Expected key=value, got %r'
                             % ' '.join(tokens[start:start + 3]))
        pairs.append((key, value))
    return pairs


def _section_header(line):
    stripped = line.split('#', 1)[0].strip()
    if stripped.startswith('[') and stripped.endswith(']'):
        return stripped[1:-1].strip()
    return None


def _read_entries(text, path):
    """Return ``{section: {key: (value, lineno)}}`` with ``None`` the top
    level."""
    entries = {None: {}}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = _section_header(line)
        if header is not None:
            if header not in SECTION_KEYS:
                raise ConfigurationError(
                    'Unknown section [%s], expected one of %s'
                    % (header, ', '.join(SECTION_KEYS)), path, lineno)
            section = header
            entries.setdefault(section, {})
            continue

        try:
            pairs = _parse_parameters(line)
        except ValueError as error:
            raise ConfigurationError(str(error), path, lineno) from None

        allowed = TOP_LEVEL_KEYS if section is None else SECTION_KEYS[section]
        for key, text_value in pairs:
            if key not in allowed:
                raise ConfigurationError(
                    'Unknown key %r in %s' % (
                        key, 'top level' if section is None
                        else '[%s]' % section), path, lineno)
            if key in entries[section]:
                raise ConfigurationError('Duplicate key %r' % key,
                                         path, lineno)
            try:
                value = _convert(allowed[key], key, text_value)
            except ValueError as error:
                raise ConfigurationError(str(error), path, lineno) from None
            entries[section][key] = (value, lineno)
    return entries


def _choice(entries, key, choices, path, default=None):
    if key not in entries:
        if default is None:
            raise ConfigurationError('Missing key %r' % key, path)
        return default
    value, lineno = entries[key]
    if value not in choices:
        raise ConfigurationError('%s must be one of %s, got %r'
                                 % (key, ', '.join(choices), value),
                                 path, lineno)
    return value


def _adaptive_config(entries, path):
    config = AdaptiveConfig()
    for key, (value, lineno) in sorted(entries.items(),
                                       key=lambda item: item[1][1]):
        if key not in ADAPTIVE_KEYS:
            continue
        try:
            config = dataclasses.replace(config, **{key: value})
        except ValueError as error:
            raise ConfigurationError(str(error), path, lineno) from None
    return config


def parse_config(text, path='<config>'):
    """Parse the text of a configuration file.

    :param text: Configuration text.
    :param path: Name used in error messages and artifact names.
    :return: ExperimentConfig
    :raise ConfigurationError: on the first malformed line.
    """
    entries = _read_entries(text, path)
    top = entries[None]

    problem = _choice(top, 'problem', PROBLEM_KINDS, path)
    mode = _choice(top, 'mode', RUN_MODES, path, default='adaptive')
    domain = _choice(top, 'domain', DOMAIN_KINDS, path, default='') or None

    initial_refinements = None
    if 'initial_refinements' in top:
        initial_refinements, lineno = top['initial_refinements']
        if initial_refinements < 0:
            raise ConfigurationError('initial_refinements must be >= 0',
                                     path, lineno)

    gamma_ratio = DEFAULT_GAMMA_RATIO
    if 'gamma_ratio' in top:
        gamma_ratio, lineno = top['gamma_ratio']
        if not gamma_ratio > 1:
            raise ConfigurationError('gamma_ratio must be > 1, got %r'
                                     % gamma_ratio, path, lineno)

    for section in entries:
        if section is not None and section != problem and entries[section]:
            LOGGER.warning('Ignoring section [%s] of a %s experiment',
                           section, problem)

    config = ExperimentConfig(
        name=splitext(basename(path))[0] or 'experiment',
        problem=problem,
        mode=mode,
        domain=domain,
        initial_refinements=initial_refinements,
        adaptive=_adaptive_config(top, path),
        gamma_ratio=gamma_ratio,
        export_vtk=top.get('export_vtk', (True, None))[0],
        parameters={key: value for key, (value, _)
                    in entries.get(problem, {}).items()},
    )

    try:
        built = build_problem(config)
        built.discretize(built.initial_mesh())
    except ValueError as error:
        lineno = top['problem'][1]
        raise ConfigurationError('Invalid %s problem: %s'
                                 % (problem, error), path, lineno) from None
    return config


def load_config(path):
    """Read and parse a local or S3 configuration file."""
    with LocalFile(path) as local_path:
        with open(local_path) as file_obj:
            text = file_obj.read()
    config = parse_config(text, path)
    LOGGER.debug('Parsed %s: %s', path, config)
    return config


def _domain(config, default):
    return DomainSpec(
        config.domain or default.kind,
        default.initial_refinements if config.initial_refinements is None
        else config.initial_refinements)


def build_problem(config):
    """Return the problem object described by an ExperimentConfig."""
    parameters = dict(config.parameters)

    if config.problem == 'obstacle':
        default = ObstacleProblem()
        psi = ParaboloidObstacle(
            height=parameters.get('psi_height', default.psi.height),
            curvature=parameters.get('psi_curvature', default.psi.curvature),
            center_x=parameters.get('psi_center_x', default.psi.center_x),
            center_y=parameters.get('psi_center_y', default.psi.center_y),
        )
        return ObstacleProblem(_domain(config, default.domain), psi,
                               parameters.get('f', default.f))

    if config.problem == 'thermoforming':
        return ThermoformingProblem(
            _domain(config, ThermoformingProblem.domain), **parameters)

    if config.problem == 'membrane':
        return MembraneProblem(
            _domain(config, MembraneProblem.domain), **parameters)

    raise ValueError('Unknown problem %r' % (config.problem,))
