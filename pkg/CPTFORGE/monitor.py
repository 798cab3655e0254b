"""
Streaming watch over training-log events: NaN/Inf detection with the
emergency-save escalation, loss and gradient spike rules over rolling
windows, anomaly counters and rolling throughput.

One MonitorState per run stream. A state has a single writer; it can be
handed to another thread or process but never shared while in use.
"""
import enum
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from CPTFORGE.exceptions import ForgeError, PolicyError, StreamOrder

logger = logging.getLogger(__name__)


class FindingKind(enum.Enum):
	NAN_INF = 'NanInf'
	EMERGENCY_SAVE = 'EmergencySave'
	LOSS_SPIKE = 'LossSpike'
	GRAD_SPIKE = 'GradSpike'


@dataclass(frozen=True)
class MonitorConfig:
	loss_window: int = 20
	grad_window: int = 20
	throughput_window: int = 20
	loss_spike_factor: float = 1.5
	grad_spike_factor: float = 2.0
	emergency_nan_run: int = 3
	summary_anchor_step: int = 10

	def __post_init__(self):
		for name in ('loss_window', 'grad_window', 'throughput_window', 'emergency_nan_run'):
			if getattr(self, name) < 1:
				raise PolicyError('{} must be positive'.format(name))
		if self.loss_spike_factor <= 0 or self.grad_spike_factor <= 0:
			raise PolicyError('spike factors must be positive')


@dataclass(frozen=True)
class RunEvent:
	step: int
	loss: float
	step_time_s: float
	tokens_in_step: int = 0
	grad_norm_post_clip: Optional[float] = None
	learning_rate: Optional[float] = None
	batch_preview: Optional[str] = None


@dataclass(frozen=True)
class Finding:
	kind: FindingKind
	step: int
	value: float
	reference: Optional[float] = None
	batch_preview: Optional[str] = None

	def to_record(self):
		return {
			'finding': self.kind.value,
			'step': self.step,
			'value': self.value,
			'reference': self.reference,
			'batch_preview': self.batch_preview,
		}


@dataclass
class MonitorState:
	config: MonitorConfig = field(default_factory=MonitorConfig)
	last_step: Optional[int] = None
	consecutive_nan: int = 0
	anomaly_count: int = 0
	nan_count: int = 0
	emergency_saves: int = 0

	def __post_init__(self):
		self.loss_window = deque(maxlen=self.config.loss_window)
		self.grad_window = deque(maxlen=self.config.grad_window)
		self.throughput_window = deque(maxlen=self.config.throughput_window)


def _is_spike(value, window, factor):
	# the window holds the prior values only, so the current step is never in its own mean
	return len(window) == window.maxlen and value > factor * (sum(window) / len(window))


def observe(state, event):
	"""
	Feeds one event to the monitor
	input state: MonitorState, updated in place
	input event: RunEvent with a step above every step seen so far
	return: list of Finding raised by this event
	"""
	if state.last_step is not None and event.step <= state.last_step:
		raise StreamOrder(state.last_step, event.step)
	if not event.step_time_s > 0:
		raise ForgeError('step {}: step_time_s must be positive, got {}'.format(event.step, event.step_time_s))
	state.last_step = event.step
	state.throughput_window.append((event.tokens_in_step, event.step_time_s))
	config = state.config
	findings = []

	if not math.isfinite(event.loss):
		state.nan_count += 1
		state.consecutive_nan += 1
		findings.append(Finding(FindingKind.NAN_INF, event.step, event.loss, batch_preview=event.batch_preview))
		logger.warning('step %d: non-finite loss %s', event.step, event.loss)
		if state.consecutive_nan == config.emergency_nan_run:
			state.emergency_saves += 1
			findings.append(Finding(FindingKind.EMERGENCY_SAVE, event.step, event.loss, reference=state.consecutive_nan))
			logger.error('step %d: %d consecutive non-finite losses, emergency save', event.step, state.consecutive_nan)
	else:
		state.consecutive_nan = 0
		if _is_spike(event.loss, state.loss_window, config.loss_spike_factor):
			mean = sum(state.loss_window) / len(state.loss_window)
			findings.append(Finding(FindingKind.LOSS_SPIKE, event.step, event.loss, reference=mean))
			logger.warning('step %d: loss %.4f above %.2fx rolling mean %.4f', event.step, event.loss, config.loss_spike_factor, mean)
		state.loss_window.append(event.loss)

	grad = event.grad_norm_post_clip
	if grad is not None and math.isfinite(grad):
		if _is_spike(grad, state.grad_window, config.grad_spike_factor):
			mean = sum(state.grad_window) / len(state.grad_window)
			findings.append(Finding(FindingKind.GRAD_SPIKE, event.step, grad, reference=mean))
			logger.warning('step %d: grad norm %.2f above %.1fx rolling mean %.2f', event.step, grad, config.grad_spike_factor, mean)
		state.grad_window.append(grad)

	state.anomaly_count += len(findings)
	return findings


def throughput(state):
	"""Tokens per second over the rolling throughput window."""
	if not state.throughput_window:
		raise ForgeError('no events observed yet')
	tokens = sum(t for t, _ in state.throughput_window)
	seconds = sum(s for _, s in state.throughput_window)
	return tokens / seconds


def reduction_pct(init_loss, final_loss):
	if not init_loss > 0:
		raise PolicyError('initial loss must be positive')
	return (init_loss - final_loss) / init_loss * 100


@dataclass(frozen=True)
class RunSummary:
	# the four loss fields are None when no step logged a finite loss
	init_loss: Optional[float]
	final_loss: Optional[float]
	min_loss: Optional[float]
	reduction_pct: Optional[float]
	peak_grad: Optional[float]
	mean_grad: Optional[float]
	nan_count: int
	anomaly_count: int
	emergency_saves: int = 0
	steps: int = 0
	tokens: int = 0
	mean_throughput: Optional[float] = None

	def to_record(self):
		record = {'summary': True}
		record.update(asdict(self))
		return record


def summarize(events, config=None, sink=None):
	"""
	Runs a whole stream through a fresh monitor and summarizes it
	input events: iterable of RunEvent
	input config: MonitorConfig
	input sink: optional callable receiving each Finding as it is raised
	return: RunSummary; init_loss is the loss at the anchor step, or the first finite one after it
	A stream without a single finite loss still gets a summary, with its loss fields left None.
	"""
	state = MonitorState(config or MonitorConfig())
	anchor = state.config.summary_anchor_step
	finite, grads = [], []
	steps = tokens = 0
	seconds = 0.0
	for event in events:
		for finding in observe(state, event):
			if sink is not None:
				sink(finding)
		steps += 1
		tokens += event.tokens_in_step
		seconds += event.step_time_s
		if math.isfinite(event.loss):
			finite.append((event.step, event.loss))
		if event.grad_norm_post_clip is not None and math.isfinite(event.grad_norm_post_clip):
			grads.append(event.grad_norm_post_clip)
	if not steps:
		raise ForgeError('cannot summarize an empty event stream')
	init_loss = final_loss = min_loss = reduction = None
	if finite:
		anchored = [loss for step, loss in finite if step >= anchor]
		init_loss = anchored[0] if anchored else finite[0][1]
		losses = np.array([loss for _, loss in finite])
		final_loss, min_loss = float(losses[-1]), float(losses.min())
		reduction = reduction_pct(init_loss, final_loss)
	else:
		logger.warning('no finite loss in %d steps, the summary carries no loss figures', steps)
	grads = np.array(grads)
	return RunSummary(
		init_loss=init_loss,
		final_loss=final_loss,
		min_loss=min_loss,
		reduction_pct=reduction,
		peak_grad=float(grads.max()) if grads.size else None,
		mean_grad=float(grads.mean()) if grads.size else None,
		nan_count=state.nan_count,
		anomaly_count=state.anomaly_count,
		emergency_saves=state.emergency_saves,
		steps=steps,
		tokens=tokens,
		mean_throughput=tokens / seconds,
	)
