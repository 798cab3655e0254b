"""
Sweep analytics over run summaries: per-run loss reduction, marginal
effects per hyperparameter axis and gradient-norm statistics.
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

import pandas as pd

from CPTFORGE.exceptions import ForgeError, MissingAxis, PolicyError
from CPTFORGE.monitor import reduction_pct

logger = logging.getLogger(__name__)

REPORT_PLACES = Decimal('0.001')


@dataclass(frozen=True)
class SweepRun:
	name: str
	config: dict
	init_loss: Optional[float] = None
	final_loss: Optional[float] = None
	min_loss: Optional[float] = None
	peak_grad: Optional[float] = None
	mean_grad: Optional[float] = None

	def __post_init__(self):
		if self.min_loss is not None:
			for other in (self.final_loss, self.init_loss):
				if other is not None and self.min_loss > other:
					raise ForgeError('run {}: min_loss {} is above {}'.format(self.name, self.min_loss, other))


@dataclass(frozen=True)
class MarginalEffect:
	axis: str
	levels: list
	means: dict
	raw_means: dict
	counts: dict
	delta: float
	delta_raw: float

	def to_record(self):
		return {
			'axis': self.axis,
			'levels': [
				{'level': level, 'mean_final_loss': self.means[level], 'raw_mean': self.raw_means[level], 'runs': self.counts[level]}
				for level in self.levels
			],
			'delta': self.delta,
			'delta_raw': self.delta_raw,
			'from_level': self.levels[0],
			'to_level': self.levels[-1],
		}


@dataclass(frozen=True)
class GradRow:
	name: str
	config: dict = field(compare=False)
	peak_grad: float = 0.0
	mean_grad: float = 0.0
	duplicate: bool = False


def reduction(run):
	"""Loss reduction in percent relative to the run's initial loss."""
	if run.init_loss is None or run.final_loss is None:
		raise ForgeError('run {} has no init/final loss'.format(run.name))
	return reduction_pct(run.init_loss, run.final_loss)


def _report_mean(values):
	"""Mean of decimal-written losses, rounded half-up at three places."""
	total = sum((Decimal(str(value)) for value in values), Decimal(0))
	return (total / len(values)).quantize(REPORT_PLACES, rounding=ROUND_HALF_UP)


def marginal_effects(runs, axis, levels=None):
	"""
	Mean final loss at each level of one axis, averaged over the other axes
	input runs: list of SweepRun
	input axis: config key
	input levels: level order; sorted() of the observed levels by default
	return: MarginalEffect with delta = mean(first level) - mean(last level),
		taken from the three-place means (delta_raw from full precision)
	"""
	runs = list(runs)
	if not runs:
		raise ForgeError('no runs to analyse')
	for run in runs:
		if axis not in run.config:
			raise MissingAxis(axis, run.name)
		if run.final_loss is None:
			raise ForgeError('run {} has no final loss'.format(run.name))
	frame = pd.DataFrame({
		'level': [run.config[axis] for run in runs],
		'final_loss': [run.final_loss for run in runs],
	})
	grouped = frame.groupby('level', sort=False)['final_loss']
	raw = grouped.mean()
	counts = grouped.size()
	values = grouped.apply(list)
	order = list(levels) if levels is not None else sorted(raw.index)
	order = [level.item() if hasattr(level, 'item') else level for level in order]
	unknown = [level for level in order if level not in raw.index]
	if unknown:
		raise PolicyError('axis {!r} has no runs at level(s) {}'.format(axis, unknown))
	means = {level: _report_mean(values[level]) for level in order}
	first, last = order[0], order[-1]
	return MarginalEffect(
		axis=axis,
		levels=order,
		means={level: float(mean) for level, mean in means.items()},
		raw_means={level: float(raw[level]) for level in order},
		counts={level: int(counts[level]) for level in order},
		delta=float(means[first] - means[last]),
		delta_raw=float(raw[first] - raw[last]),
	)


def grad_stats(runs):
	"""
	Gradient statistics sorted by peak norm, highest first; equal peaks keep input order
	input runs: list of SweepRun carrying peak_grad and mean_grad
	return: list of GradRow; rows sharing a configuration name are flagged duplicate
	"""
	runs = [run for run in runs if run.peak_grad is not None]
	names = Counter(run.name for run in runs)
	for name, seen in names.items():
		if seen > 1:
			logger.warning('configuration %s appears %d times in the gradient statistics', name, seen)
	rows = [
		GradRow(run.name, run.config, run.peak_grad, run.mean_grad, duplicate=names[run.name] > 1)
		for run in runs
	]
	return sorted(rows, key=lambda row: row.peak_grad, reverse=True)


def _level_label(value):
	return '{:.2e}'.format(value) if isinstance(value, float) else str(value)


def sweep_table(runs):
	"""Per-run results with the reduction column, best reduction first."""
	rows = []
	for run in runs:
		rows.append({
			'Configuration': run.name,
			'r': run.config.get('rank'),
			'Target': run.config.get('target'),
			'LR': _level_label(run.config.get('lr')) if run.config.get('lr') is not None else None,
			'Init Loss': run.init_loss,
			'Final Loss': run.final_loss,
			'Min Loss': run.min_loss,
			'Reduction %': round(reduction(run), 1),
		})
	frame = pd.DataFrame(rows)
	return frame.sort_values('Reduction %', ascending=False, kind='stable').reset_index(drop=True)


def marginal_table(effects):
	rows = []
	for effect in effects:
		for i, level in enumerate(effect.levels):
			rows.append({
				'Axis': effect.axis if i == 0 else '',
				'Level': _level_label(level),
				'Mean Final Loss': '{:.3f}'.format(effect.means[level]),
				'Delta (absolute)': '{:.3f} ({} -> {})'.format(
					abs(effect.delta), _level_label(effect.levels[0]), _level_label(effect.levels[-1])) if i == 0 else '',
			})
	return pd.DataFrame(rows)


def grad_table(rows):
	return pd.DataFrame([{
		'Configuration': row.name,
		'Peak Grad Norm': row.peak_grad,
		'Mean Grad Norm': row.mean_grad,
		'Duplicate': 'yes' if row.duplicate else '',
	} for row in rows])
