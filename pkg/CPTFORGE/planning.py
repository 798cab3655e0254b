"""
Closed-form run planning: LoRA/RSLoRA scaling, adapter parameter counts,
batch arithmetic, the warmup + cosine schedule with its two parameter
groups, the stable-LR rank rule and factorial sweep grids.
"""
import enum
import itertools
import math
from dataclasses import dataclass, field

import pandas as pd

from CPTFORGE.exceptions import MissingModuleDims, PolicyError, RecordError
from CPTFORGE.records import read_text_lines

ATTENTION_MODULES = ('q_proj', 'k_proj', 'v_proj', 'o_proj')
FULL_MODULES = ATTENTION_MODULES + ('gate_proj', 'up_proj', 'down_proj', 'embed_tokens', 'lm_head')
TARGET_PRESETS = {
	'attn_only': ATTENTION_MODULES,
	'full': FULL_MODULES,
}
EMBEDDING_MODULES = ('embed_tokens', 'lm_head')


class Group(enum.Enum):
	MAIN = 'main'
	EMBEDDING = 'embedding'


def group_of(module_name):
	return Group.EMBEDDING if module_name in EMBEDDING_MODULES else Group.MAIN


@dataclass(frozen=True)
class ModuleDescriptor:
	name: str
	d_in: int
	d_out: int
	count: int = 1

	def __post_init__(self):
		if min(self.d_in, self.d_out, self.count) < 1:
			raise PolicyError('module {} needs positive dims and count'.format(self.name))


@dataclass(frozen=True)
class LoraConfig:
	rank: int
	alpha: float = None
	dropout: float = 0.05
	rslora: bool = True
	target_modules: tuple = FULL_MODULES

	def __post_init__(self):
		if self.rank < 1:
			raise PolicyError('LoRA rank must be at least 1, got {}'.format(self.rank))
		if self.alpha is None:
			object.__setattr__(self, 'alpha', 2 * self.rank)
		if self.alpha <= 0:
			raise PolicyError('alpha must be positive')
		if not 0 <= self.dropout < 1:
			raise PolicyError('dropout must be in [0, 1)')
		targets = self.target_modules
		if isinstance(targets, str):
			try:
				targets = TARGET_PRESETS[targets]
			except KeyError:
				raise PolicyError('unknown target preset {!r}'.format(targets))
		object.__setattr__(self, 'target_modules', tuple(targets))


def adapter_scale(cfg):
	"""alpha/sqrt(r) with RSLoRA, alpha/r without."""
	return cfg.alpha / (math.sqrt(cfg.rank) if cfg.rslora else cfg.rank)


def effective_lr(lr, cfg):
	if lr <= 0:
		raise PolicyError('learning rate must be positive')
	return lr * adapter_scale(cfg)


def trainable_params(cfg, modules):
	"""
	Adapter parameter count r * sum(count * (d_in + d_out)) over the targeted modules
	input cfg: LoraConfig
	input modules: iterable of ModuleDescriptor
	return: int
	"""
	return sum(param_groups(cfg, modules).values())


def param_groups(cfg, modules):
	"""Adapter parameters split into the Main and Embedding optimizer groups."""
	by_name = {module.name: module for module in modules}
	missing = [name for name in cfg.target_modules if name not in by_name]
	if missing:
		raise MissingModuleDims(missing)
	groups = {Group.MAIN: 0, Group.EMBEDDING: 0}
	for name in cfg.target_modules:
		module = by_name[name]
		groups[group_of(name)] += cfg.rank * module.count * (module.d_in + module.d_out)
	return groups


def load_architecture(path):
	"""
	Reads an architecture descriptor: one `name d_in d_out count` record per line,
	`#` starts a comment
	"""
	modules = []
	for line_no, line in read_text_lines(path):
		line = line.split('#', 1)[0].strip()
		if not line:
			continue
		parts = line.split()
		try:
			if len(parts) != 4:
				raise ValueError('expected name d_in d_out count')
			modules.append(ModuleDescriptor(parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
		except (ValueError, PolicyError) as exc:
			raise RecordError(line_no, str(exc))
	return modules


@dataclass(frozen=True)
class TrainPlan:
	per_device_batch: int
	grad_accum: int
	n_gpu: int
	seq_len: int
	main_lr: float
	total_steps: int
	embed_lr_ratio: float = 0.5
	min_lr: float = 0.0
	warmup_frac: float = 0.10
	max_grad_norm: float = 5.0
	seed: int = 3407

	def __post_init__(self):
		for name in ('per_device_batch', 'grad_accum', 'n_gpu', 'seq_len', 'total_steps'):
			if getattr(self, name) < 1:
				raise PolicyError('{} must be positive'.format(name))
		if not 0 < self.warmup_frac < 1:
			raise PolicyError('warmup_frac must be in (0, 1)')
		if self.main_lr <= 0 or self.min_lr < 0 or self.min_lr > self.main_lr:
			raise PolicyError('need 0 <= min_lr <= main_lr and main_lr > 0')
		if self.embed_lr_ratio <= 0:
			raise PolicyError('embed_lr_ratio must be positive')

	@property
	def warmup_steps(self):
		return self.warmup_frac * self.total_steps


def tokens_per_step(plan):
	"""Returns (tokens per optimizer step, effective batch size)."""
	batch = plan.per_device_batch * plan.grad_accum * plan.n_gpu
	return batch * plan.seq_len, batch


def lr_at(t, plan, group=Group.MAIN):
	"""
	Learning rate at step t: linear ramp to the peak over the warmup, cosine down to min_lr after
	input t: step in [0, total_steps]
	input plan: TrainPlan
	input group: Group; the Embedding group runs the same shape scaled by embed_lr_ratio
	return: float
	"""
	if not 0 <= t <= plan.total_steps:
		raise PolicyError('step {} is outside [0, {}]'.format(t, plan.total_steps))
	scale = plan.embed_lr_ratio if Group(group) is Group.EMBEDDING else 1.0
	peak, floor = plan.main_lr * scale, plan.min_lr * scale
	t_w = plan.warmup_steps
	if t <= t_w:
		return peak * t / t_w
	progress = (t - t_w) / (plan.total_steps - t_w)
	return floor + 0.5 * (peak - floor) * (1 + math.cos(math.pi * progress))


def schedule_points(plan):
	"""
	Milestones of the schedule: start, warmup end, decay midpoint and last step
	return: list of (label, step, main LR, embedding LR)
	"""
	t_w = plan.warmup_steps
	steps = (
		('start', 0),
		('warmup end', t_w),
		('decay midpoint', t_w + (plan.total_steps - t_w) / 2),
		('final', plan.total_steps),
	)
	return [(label, t, lr_at(t, plan), lr_at(t, plan, Group.EMBEDDING)) for label, t in steps]


def max_stable_lr(r_target, r_ref, lr_ref):
	if min(r_target, r_ref, lr_ref) <= 0:
		raise PolicyError('ranks and reference LR must be positive')
	return lr_ref * math.sqrt(r_ref / r_target)


def factorial_grid(axes, exclude=()):
	"""
	Full factorial over axes, in axis order with the last axis varying fastest
	input axes: dict axis -> list of levels
	input exclude: dicts of axis -> level (a config matching every pair is dropped) or predicates
	return: list of dict configurations
	"""
	for axis, levels in axes.items():
		if not levels:
			raise PolicyError('axis {!r} has no levels'.format(axis))
	names = list(axes)
	grid = [dict(zip(names, combo)) for combo in itertools.product(*(axes[name] for name in names))]

	def excluded(config):
		for rule in exclude:
			if callable(rule):
				if rule(config):
					return True
			elif all(config.get(axis) == level for axis, level in rule.items()):
				return True
		return False

	return [config for config in grid if not excluded(config)]


def steps_for_tokens(token_budget, plan):
	per_step, _ = tokens_per_step(plan)
	return math.ceil(token_budget / per_step)


def epoch_fraction(plan, corpus_tokens):
	per_step, _ = tokens_per_step(plan)
	return plan.total_steps * per_step / corpus_tokens


def sweep_cost(n_configs, mean_hours):
	return n_configs * mean_hours


@dataclass
class PlanReport:
	lora: LoraConfig
	plan: TrainPlan
	modules: list = field(default_factory=list)

	def to_record(self):
		tokens, batch = tokens_per_step(self.plan)
		record = {
			'rank': self.lora.rank,
			'alpha': self.lora.alpha,
			'dropout': self.lora.dropout,
			'rslora': self.lora.rslora,
			'target_modules': list(self.lora.target_modules),
			'adapter_scale': adapter_scale(self.lora),
			'effective_batch': batch,
			'tokens_per_step': tokens,
			'total_steps': self.plan.total_steps,
			'total_tokens': tokens * self.plan.total_steps,
			'warmup_steps': self.plan.warmup_steps,
			'main_lr': self.plan.main_lr,
			'embed_lr': self.plan.main_lr * self.plan.embed_lr_ratio,
			'min_lr': self.plan.min_lr,
			'effective_lr': effective_lr(self.plan.main_lr, self.lora),
			'max_grad_norm': self.plan.max_grad_norm,
			'seed': self.plan.seed,
		}
		record['lr_schedule'] = [
			{'point': label, 'step': step, 'main_lr': main, 'embed_lr': embed}
			for label, step, main, embed in schedule_points(self.plan)
		]
		if self.modules:
			groups = param_groups(self.lora, self.modules)
			record['trainable_params'] = sum(groups.values())
			record['main_params'] = groups[Group.MAIN]
			record['embedding_params'] = groups[Group.EMBEDDING]
		return record

	def table(self):
		record = self.to_record()
		rows = [
			('LoRA rank (r)', '{:,}'.format(record['rank'])),
			('LoRA alpha', '{:,g}'.format(record['alpha'])),
			('Scaling', 'RSLoRA (alpha/sqrt(r))' if record['rslora'] else 'standard (alpha/r)'),
			('Adapter scale', '{:.4f}'.format(record['adapter_scale'])),
			('Target modules', ', '.join(record['target_modules'])),
			('Effective batch size', '{:,}'.format(record['effective_batch'])),
			('Tokens per optimizer step', '{:,}'.format(record['tokens_per_step'])),
			('Total steps', '{:,}'.format(record['total_steps'])),
			('Total tokens', '{:,}'.format(record['total_tokens'])),
			('Warmup steps', '{:,g}'.format(record['warmup_steps'])),
			('Main LR', '{:.2e}'.format(record['main_lr'])),
			('Embedding/LM-head LR', '{:.2e}'.format(record['embed_lr'])),
			('Max grad norm', '{:g}'.format(record['max_grad_norm'])),
		]
		for point in record['lr_schedule']:
			rows.append((
				'LR at step {:,g} ({})'.format(point['step'], point['point']),
				'{:.2e} main, {:.2e} embedding'.format(point['main_lr'], point['embed_lr']),
			))
		if 'trainable_params' in record:
			rows.append(('Trainable parameters', '{:,}'.format(record['trainable_params'])))
			rows.append(('  Main group', '{:,}'.format(record['main_params'])))
			rows.append(('  Embedding group', '{:,}'.format(record['embedding_params'])))
		return pd.DataFrame(rows, columns=['Parameter', 'Value']).to_string(index=False)
