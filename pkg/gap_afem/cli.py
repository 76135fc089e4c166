"""Usage:
    gap-afem solve [options] <config>
    gap-afem (-h | --help)
    gap-afem --version

Run an adaptive (or uniform baseline) finite element experiment described by
a key=value configuration file and write CSV, VTK and summary artifacts.

Options:
    --output-dir=<OUTPUT_DIR>  Output directory or S3 prefix.  [default: .]
    --seed=<seed>  Seed of the random number generator, all algorithms are
                   deterministic.  [default: 0]
    --log-level=<level>  DEBUG, INFO, WARNING or ERROR.  [default: INFO]
    --workers=<workers>  Maximum number of parallel runs.  [default: 1]
    --overwrite  Overwrite output files if they already exist.
    -h --help  Display this help
    --version  Display version
"""
import logging

import numpy as np
from docopt import docopt

from . import __version__
from .config import ConfigurationError, load_config
from .execute import run_experiment
from .file_handler import (
    path_is_readable_file,
    create_writable_directory,
    disable_s3_verbose_logging,
)


LOG_FORMAT = '[%(asctime)s %(levelname)s] %(message)s'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
LOGGER = logging.getLogger(__name__)


def log_input_options(args):
    LOGGER.debug('Running experiment with following arguments:')
    for key in sorted(args.keys()):
        if key in ['--help', '--version']:
            continue
        LOGGER.debug('%s: %s', key, args[key])


def parse_args(args):
    """Return sanitized dict of arguments.

    :raise ValueError: on an invalid option value.
    """
    try:
        workers = int(args['--workers'])
        seed = int(args['--seed'])
    except ValueError:
        raise ValueError('--workers and --seed must be integers') from None
    if workers < 1:
        raise ValueError('--workers must be >= 1, got %d' % workers)

    config = args['<config>']
    if not path_is_readable_file(config):
        raise ValueError('%s is not a readable configuration file' % config)

    output_dir = args['--output-dir']
    create_writable_directory(output_dir)

    return dict(
        config=config,
        output_dir=output_dir,
        overwrite=args['--overwrite'],
        workers=workers,
        seed=seed,
    )


def main(argv=None):
    """Main function of gap-afem."""
    args = docopt(__doc__, argv=argv, version=__version__)

    log_level = args['--log-level'].upper()
    if log_level not in LOG_LEVELS:
        logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
        LOGGER.error('Invalid arguments: --log-level must be one of %s, '
                     'got %r', ', '.join(LOG_LEVELS), args['--log-level'])
        return 1
    logging.basicConfig(level=getattr(logging, log_level), format=LOG_FORMAT)
    disable_s3_verbose_logging()

    # In debug mode, log input options
    log_input_options(args)

    try:
        args = parse_args(args)
        config = load_config(args['config'])
    except ConfigurationError as error:
        LOGGER.error('%s', error)
        return 1
    except ValueError as error:
        LOGGER.error('Invalid arguments: %s', error)
        return 1

    np.random.seed(args['seed'])

    return run_experiment(config, args['output_dir'],
                          overwrite=args['overwrite'],
                          workers=args['workers'])
