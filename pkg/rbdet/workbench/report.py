"""plot-ready tables and a plain-text summary of a run"""

import logging
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

from ..errors import ConfigError
from ..evalbench import HEADLINE, MetricsReport
from ..evalbench.report import COMPARISON_COLUMNS

logger = logging.getLogger(__name__)

SUMMARY = 'summary.txt'

TABLES = {
    'comparison': COMPARISON_COLUMNS,
    'loss_change': ['pair', 'dataset', 'image_id', 'L_before', 'L_after',
                    'delta'],
    'buckets': ['method', 'axis', 'value', 'low', 'mid', 'high'],
    'asr_by_class': ['method', 'axis', 'value', 'class', 'ASR'],
}


def _table(record, name: str) -> pd.DataFrame:
    path = record.tables.get(name)
    if path is None or not Path(path).exists():
        return pd.DataFrame(columns=TABLES[name])
    return pd.read_csv(path)


def loss_change_medians(changes: pd.DataFrame) -> pd.DataFrame:
    """median delta per model pair and dataset"""

    columns = ['pair', 'dataset', 'median_delta', 'images']
    if changes.empty:
        return pd.DataFrame(columns=columns)
    grouped = changes.groupby(['pair', 'dataset'], sort=False)['delta']
    return pd.DataFrame({'median_delta': grouped.median(),
                         'images': grouped.size()}).reset_index()[columns]


def headline_row(record) -> Dict[str, object]:
    """the noise-free headline metrics of the run's most robust model"""

    for method in ('mad', 'backdoor', 'clean'):
        if method in record.reports:
            report = MetricsReport.load(record.reports[method])
            return {'method': method, **report.headline()}
    return {}


def sweep_table(record) -> pd.DataFrame:
    """one row per sweep point: the swept values and the headline metrics"""

    keys = list(record.points[0].point) if record.points else []
    rows = [{**p.point, **headline_row(p)} for p in record.points]
    return pd.DataFrame(rows, columns=keys + ['method', *HEADLINE])


def summary_lines(record, reports: Dict[str, MetricsReport]):
    yield f'run {record.run_id} ({record.status})'
    yield f'directory {record.directory}'
    yield f'config digest {record.config_digest}'
    yield f'source digest {record.source_digest}'
    for name, report in reports.items():
        yield ''
        yield f'[{name}]'
        for key, value in report.headline().items():
            yield f'{key} = {value!r}'
        yield f'attacked objects = {report.attacked_objects!r}'
    for point in record.points:
        yield ''
        yield f'[{point.directory}] ' + ', '.join(
            f'{k} = {v!r}' for k, v in point.point.items())
        for key, value in headline_row(point).items():
            yield f'{key} = {value!r}'
    if record.trend is not None:
        yield ''
        yield (f"trend of {record.trend['metric']} over the sweep: "
               f"{'passed' if record.trend['passed'] else 'FAILED'}, "
               f"inversions {record.trend['inversions']}")


def emit_report(record, directory: Optional[Path] = None) -> Dict[str, str]:
    """write the run's tables and summary

    :param record: RunRecord, of a single run or of a sweep

    :param directory: where to write; a ``report`` directory in the run
    by default

    :rtype: dict of table name to path written

    """

    if record.status == 'failed':
        raise ConfigError(f'run {record.directory} failed in stage '
                          f'{record.failed_stage}; nothing to report')
    directory = Path(record.directory, 'report') if directory is None \
        else Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    written = {}
    for name in TABLES:
        frame = _table(record, name)
        if name == 'loss_change':
            medians = loss_change_medians(frame)
            medians.to_csv(directory / 'loss_change_medians.csv',
                           index=False)
            written['loss_change_medians'] = str(
                directory / 'loss_change_medians.csv')
        frame.to_csv(directory / f'{name}.csv', index=False)
        written[name] = str(directory / f'{name}.csv')
    sweep_table(record).to_csv(directory / 'sweep.csv', index=False)
    written['sweep'] = str(directory / 'sweep.csv')

    noise_free = {name: MetricsReport.load(path)
                  for name, path in sorted(record.reports.items())
                  if '@' not in name}
    (directory / SUMMARY).write_text(
        '\n'.join(summary_lines(record, noise_free)) + '\n')
    written['summary'] = str(directory / SUMMARY)
    logger.info('report of %s written to %s', record.run_id, directory)
    return written
