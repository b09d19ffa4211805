import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMATS = ('json', 'csv', 'human')
CSV_COLUMNS = ['grid_index', 'point', 'identity_name', 'residual', 'scale', 'tolerance', 'passed', 'vacuous']
SUMMARY_COLUMNS = ['identity_name', 'points', 'max_residual', 'tolerance', 'pass_rate', 'vacuous', 'passed']


@dataclass
class Report:
    """Outcome of one scenario run"""

    scenario: dict
    records: list = field(default_factory=list)
    fitted: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    error: Optional[dict] = None

    @property
    def summary(self):
        return ReportGenerator.calculate_summary(self.records)

    @property
    def passed(self):
        return self.error is None and all(r['passed'] for r in self.records)

    @property
    def verdict(self):
        if self.error is not None:
            return 'error'
        return 'pass' if self.passed else 'fail'

    @property
    def exit_code(self):
        if self.error is not None:
            return int(self.error.get('exit_code', 2))
        return 0 if self.passed else 1

    def failures(self):
        return [r for r in self.records if not r['passed']]

    def to_dict(self):
        summary = self.summary
        return {
            'schema_version': SCHEMA_VERSION,
            'scenario': self.scenario,
            'verdict': self.verdict,
            'summary': summary.to_dict(orient='records'),
            'records': self.records,
            'fitted': self.fitted,
            'notes': self.notes,
            'error': self.error,
        }

    @classmethod
    def from_dict(cls, payload):
        version = payload.get('schema_version')
        if version != SCHEMA_VERSION:
            raise ValueError(f"Unsupported report schema version: {version}")
        return cls(
            scenario=payload.get('scenario', {}),
            records=list(payload.get('records', [])),
            fitted=list(payload.get('fitted', [])),
            notes=list(payload.get('notes', [])),
            error=payload.get('error'),
        )


def _plain(value):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to None"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ReportGenerator:
    """Generate report files and summaries"""

    @staticmethod
    def emit(report, fmt='json'):
        """
        Serialize a report.

        Args:
            report: Report
            fmt: 'json', 'csv' or 'human'

        Returns:
            bytes
        """
        if fmt == 'json':
            return ReportGenerator.to_json(report)
        if fmt == 'csv':
            return ReportGenerator.to_csv(report)
        if fmt == 'human':
            return ReportGenerator.to_human(report)
        raise ValueError(f"Unknown report format: {fmt}")

    @staticmethod
    def to_json(report):
        payload = _plain(report.to_dict())
        return (json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + '\n').encode('utf-8')

    @staticmethod
    def read_json(data):
        if isinstance(data, bytes):
            data = data.decode('utf-8')
        return Report.from_dict(json.loads(data))

    @staticmethod
    def records_frame(records):
        """One row per (grid point, identity)"""
        if not records:
            return pd.DataFrame(columns=CSV_COLUMNS)
        df = pd.DataFrame(records)
        df['point'] = df['point'].apply(lambda p: ' '.join(f'{x:.12g}' for x in p))
        if 'grid_index' not in df:
            df['grid_index'] = -1
        return df[CSV_COLUMNS]

    @staticmethod
    def to_csv(report):
        df = ReportGenerator.records_frame(report.records)
        return df.to_csv(index=False, lineterminator='\n').encode('utf-8')

    @staticmethod
    def calculate_summary(records):
        """Per identity: point count, worst residual, pass rate and verdict"""

        if not records:
            return pd.DataFrame(columns=SUMMARY_COLUMNS)
        df = pd.DataFrame(records)
        grouped = df.groupby('identity_name', sort=True)
        summary = pd.DataFrame({
            'points': grouped.size(),
            'max_residual': grouped['residual'].max(),
            'tolerance': grouped['tolerance'].min(),
            'pass_rate': grouped['passed'].mean() * 100,
            'vacuous': grouped['vacuous'].sum().astype(int),
            'passed': grouped['passed'].all(),
        }).reset_index()
        return summary[SUMMARY_COLUMNS]

    @staticmethod
    def fitted_frame(fitted):
        """Per-point fitted quantities (phi, psi, k, lambdas, beta)"""
        if not fitted:
            return pd.DataFrame()
        df = pd.DataFrame(fitted)
        if 'lambdas' in df:
            df['lambdas'] = df['lambdas'].apply(
                lambda xs: ' '.join(f'{x:.6g}' for x in xs) if isinstance(xs, list) else xs)
        if 'point' in df:
            df['point'] = df['point'].apply(lambda p: ' '.join(f'{x:.4g}' for x in p))
        return df

    @staticmethod
    def to_human(report):
        scenario = report.scenario
        lines = [
            f"Scenario: {scenario.get('hypersurface')} (n = {scenario.get('n')})"
            + (f" from {scenario['source']}" if scenario.get('source') else ''),
        ]
        if report.error is not None:
            lines.append(f"❌ {report.error.get('error')}: {report.error.get('message')}")
            cause = report.error.get('cause')
            if cause:
                lines.append(f"   cause: {cause.get('error')}: {cause.get('message')}")

        summary = report.summary
        if not summary.empty:
            lines += ['', 'Summary', summary.to_string(index=False, float_format=lambda x: f'{x:.3e}')]

        fitted = ReportGenerator.fitted_frame(report.fitted)
        if not fitted.empty:
            lines += ['', 'Fitted quantities', fitted.to_string(index=False, float_format=lambda x: f'{x:.6g}')]

        if report.notes:
            lines += ['', 'Notes'] + [f"  ⚠️ {note}" for note in report.notes]

        failures = report.failures()
        icon = {'pass': '✅', 'fail': '❌', 'error': '❌'}[report.verdict]
        lines += ['', f"{icon} Verdict: {report.verdict.upper()} ({len(report.records)} records, "
                      f"{len(failures)} failed)"]
        return ('\n'.join(lines) + '\n').encode('utf-8')
