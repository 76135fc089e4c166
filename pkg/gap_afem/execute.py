import logging
import multiprocessing
from inspect import signature

from .adaptivity import AdaptiveRunError, run_adaptive, run_uniform
from .config import build_problem
from .constant import SUMMARY_FILENAME
from .export import (
    export_vtk,
    run_fields,
    summarize,
    write_csv,
    write_summary,
)
from .file_handler import (
    join_path,
    path_exists,
    remove_path,
)


LOGGER = logging.getLogger(__name__)


def get_tasks(config, output_dir, overwrite):
    """Return list of runs of an experiment.

    The adaptive mode gives one task, the uniform mode one task per penalty
    of the geometric ladder ``config.gamma_ladder()``, ``both`` all of them.

    :param config: ExperimentConfig
    :param output_dir: Output directory or S3 prefix.
    :param overwrite: Boolean enabling overwriting output
    :return List of **kwargs to pass to execute_task
    """
    runs = []
    if config.mode in ('adaptive', 'both'):
        runs.append(('adaptive', None, '%s_adaptive' % config.name))
    if config.mode in ('uniform', 'both'):
        for index, gamma in enumerate(config.gamma_ladder()):
            runs.append(('uniform', gamma,
                         '%s_uniform_%d' % (config.name, index + 1)))

    tasks = []
    for kind, gamma, stem in runs:
        tasks.append(
            dict(
                config=config,
                kind=kind,
                gamma=gamma,
                output_prefix=join_path(output_dir, stem),
                overwrite=overwrite,
            )
        )

    for task_id, task in enumerate(tasks):
        LOGGER.debug('Task %d: %s gamma=%s -> %s', task_id + 1, task['kind'],
                     task['gamma'], task['output_prefix'])

    return tasks


def _write_artifacts(run_log, output_prefix, export_vtk_file):
    write_csv(output_prefix + '.csv', run_log)
    if export_vtk_file and run_log.final_state is not None:
        export_vtk(output_prefix + '.vtk', run_log.final_state.mesh,
                   run_fields(run_log))


def execute_task(config, kind, gamma, output_prefix, overwrite):
    """Run one adaptive or uniform computation and export its artifacts.

    :param config: ExperimentConfig
    :param kind: ``'adaptive'`` or ``'uniform'``.
    :param gamma: Fixed penalty of a uniform run, ignored otherwise.
    :param output_prefix: Artifact path without extension.
    :param overwrite: Boolean enabling overwriting output
    :return: ``(return code, label, summary entries or None if skipped)``
    """
    label = output_prefix.split('/')[-1]
    csv_file = output_prefix + '.csv'
    if path_exists(csv_file):
        if not overwrite:
            LOGGER.info("Skip existing output file %s", csv_file)
            return 0, label, None

        LOGGER.info("Remove existing output file %s", csv_file)
        remove_path(csv_file)

    problem = build_problem(config)
    LOGGER.info("Running %s %s on %s", kind, problem.name,
                problem.domain.kind)
    try:
        if kind == 'adaptive':
            run_log = run_adaptive(problem, config.adaptive)
        else:
            run_log = run_uniform(problem, gamma, config.adaptive)
    except AdaptiveRunError as error:
        LOGGER.error("%s failed: %s", label, error)
        if error.run_log.records:
            _write_artifacts(error.run_log, output_prefix, config.export_vtk)
        return 1, label, summarize(error.run_log) + [('failed', 'true')]

    _write_artifacts(run_log, output_prefix, config.export_vtk)
    return 0, label, summarize(run_log)


def run_experiment(config, output_dir, overwrite=False, workers=1):
    """Run every task of an experiment and write the summary file.

    :param config: ExperimentConfig
    :param output_dir: Output directory or S3 prefix.
    :param overwrite: Boolean enabling overwriting output
    :param workers: Maximum number of parallel tasks.
    :return: Highest return code of the tasks.
    """
    kw_tasks = get_tasks(config, output_dir, overwrite)

    # Flatten list of kwargs to list of args
    tasks = [
        [kw_task[arg] for arg in signature(execute_task).parameters]
        for kw_task in kw_tasks
    ]

    results = []
    if workers > 1 and len(tasks) > 1:
        with multiprocessing.Pool(min(workers, len(tasks))) as pool:
            results = pool.starmap(execute_task, tasks, chunksize=1)
    else:
        # Execute without multiprocessing to ease debugging
        for task in tasks:
            results.append(execute_task(*task))

    entries = [('problem', config.problem), ('mode', config.mode)]
    for _, label, task_entries in results:
        if task_entries is None:
            entries.append(('%s.skipped' % label, 'true'))
            continue
        entries.extend(('%s.%s' % (label, key), value)
                       for key, value in task_entries)
    write_summary(join_path(output_dir, '%s_%s' % (config.name,
                                                   SUMMARY_FILENAME)),
                  entries)

    return max(code for code, _, _ in results) if results else 0
