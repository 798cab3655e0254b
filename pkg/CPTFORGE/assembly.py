"""
Mixture assembly: truncation to the token budget, end-of-text termination,
in-order sequence packing and corpus statistics.
"""
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from CPTFORGE.exceptions import ForgeError, OversizeSample, PolicyError, StreamOrder
from CPTFORGE.tokencount import ASSEMBLY_CHARS_PER_TOKEN, TokenCounter

logger = logging.getLogger(__name__)

DEFAULT_EOT = '<|endoftext|>'
DEFAULT_BOUNDARY_CHARS = ('\n', '.', ';')


class PackMode(enum.Enum):
	# whole samples only, a sample that does not fit opens a new window
	GREEDY = 'greedy'
	# one concatenated token stream cut into full windows, samples may straddle two
	STREAM = 'stream'


@dataclass(frozen=True)
class AssemblyPolicy:
	max_tokens: int = 2048
	counter: TokenCounter = field(default_factory=lambda: TokenCounter.char(ASSEMBLY_CHARS_PER_TOKEN))
	eot_token: str = DEFAULT_EOT
	boundary_chars: tuple = DEFAULT_BOUNDARY_CHARS

	def __post_init__(self):
		object.__setattr__(self, 'boundary_chars', tuple(self.boundary_chars))
		if self.max_tokens < 1:
			raise PolicyError('max_tokens must be at least 1')
		if not self.eot_token:
			raise PolicyError('eot_token must not be empty')


@dataclass
class PackedSequence:
	window_tokens: int
	member_sample_idxs: list
	used_tokens: int
	texts: list = field(default=None, repr=False)

	@property
	def fill_fraction(self):
		return self.used_tokens / self.window_tokens

	def to_record(self):
		return {
			'window_tokens': self.window_tokens,
			'member_sample_idxs': list(self.member_sample_idxs),
			'used_tokens': self.used_tokens,
			'fill_fraction': self.fill_fraction,
		}


@dataclass(frozen=True)
class CorpusStats:
	sample_count: int
	total_tokens: int
	mean_sample_tokens: float
	packing_fill_rate: float
	p50_sample_tokens: float = 0.0
	p95_sample_tokens: float = 0.0
	window_count: int = 0
	window_tokens: int = 2048

	def to_record(self):
		return {
			'sample_count': self.sample_count,
			'total_tokens': self.total_tokens,
			'mean_sample_tokens': round(self.mean_sample_tokens, 1),
			'p50_sample_tokens': self.p50_sample_tokens,
			'p95_sample_tokens': self.p95_sample_tokens,
			'window_count': self.window_count,
			'window_tokens': self.window_tokens,
			'packing_fill_rate': self.packing_fill_rate,
		}


@dataclass(frozen=True)
class AssemblyReport:
	sample_count: int
	truncated_count: int
	overflow_chars: int

	@property
	def truncated_fraction(self):
		return self.truncated_count / self.sample_count if self.sample_count else 0.0


def strip_eot(text, eot_token=DEFAULT_EOT):
	return text[:-len(eot_token)] if text.endswith(eot_token) else text


def fit_sample(text, policy=None, sample_idx=None, token_count=None):
	"""
	Fits text into the token budget
	input text: sample text without an end-of-text literal
	input policy: AssemblyPolicy
	input sample_idx: key for an external token count
	input token_count: known count of text, used instead of asking the counter
	return: (kept text, overflow text or None, content tokens of the kept text)

	One token of max_tokens is held back for the end-of-text literal, so a
	2,048 budget keeps at most 2,047 content tokens.
	"""
	policy = policy or AssemblyPolicy()
	counter = policy.counter
	budget = policy.max_tokens - 1
	total = counter.count(text, sample_idx) if token_count is None else token_count
	if total <= budget:
		return text, None, total
	window = text[:counter.prefix_chars(text, budget, sample_idx, total)]
	cut = len(window)
	for boundary in policy.boundary_chars:
		position = window.rfind(boundary)
		if position >= 0:
			cut = position + 1
			break
	return text[:cut], text[cut:], counter.prefix_count(text, cut, sample_idx, total)


def truncate_sample(text, policy=None, sample_idx=None):
	"""
	Fits text into the token budget and terminates it with the end-of-text literal
	return: (kept text + eot_token, overflow text or None)
	"""
	policy = policy or AssemblyPolicy()
	kept, overflow, _ = fit_sample(text, policy, sample_idx)
	return kept + policy.eot_token, overflow


def assemble(samples, policy=None):
	"""
	Truncates every sample in order; overflow text is dropped, not re-queued.
	An already terminated sample is stripped first, so assembling twice is a no-op.
	Every output sample carries the token_count of its kept content.
	return: (list of Sample with terminated text, AssemblyReport)
	"""
	policy = policy or AssemblyPolicy()
	out, truncated, overflow_chars = [], 0, 0
	for sample in samples:
		text = strip_eot(sample.text, policy.eot_token)
		kept, overflow, tokens = fit_sample(text, policy, sample.sample_idx, sample.token_count)
		if overflow is not None:
			truncated += 1
			overflow_chars += len(overflow)
		out.append(replace(sample, text=kept + policy.eot_token, token_count=tokens))
	report = AssemblyReport(sample_count=len(out), truncated_count=truncated, overflow_chars=overflow_chars)
	logger.info(
		'truncated %d of %d samples (%.2f%%), %d overflow chars dropped',
		truncated, len(out), 100 * report.truncated_fraction, overflow_chars)
	if report.truncated_fraction >= 0.01:
		logger.warning('more than 1%% of samples needed hard truncation')
	return out, report


def content_tokens(sample, counter, eot_token=DEFAULT_EOT):
	if sample.token_count is not None:
		return sample.token_count
	return counter.count(strip_eot(sample.text, eot_token), sample.sample_idx)


def member_cost(sample, counter, eot_token=DEFAULT_EOT):
	"""Content tokens plus exactly one EOS, whatever the counter makes of the literal."""
	return content_tokens(sample, counter, eot_token) + 1


def pack(samples, window_tokens=2048, counter=None, eot_token=DEFAULT_EOT, mode=PackMode.GREEDY):
	"""
	Packs an ordered sample stream into fixed windows
	input samples: iterable of Sample in increasing sample_idx order
	input window_tokens: window size
	input counter: TokenCounter, char heuristic at 4.0 by default
	input mode: PackMode
	return: generator of PackedSequence
	"""
	if window_tokens < 1:
		raise PolicyError('window_tokens must be at least 1')
	counter = counter or TokenCounter.char(ASSEMBLY_CHARS_PER_TOKEN)
	mode = PackMode(mode)
	previous = None
	members, texts, used = [], [], 0
	for sample in samples:
		if previous is not None and sample.sample_idx <= previous:
			raise StreamOrder(previous, sample.sample_idx, what='sample_idx')
		previous = sample.sample_idx
		cost = member_cost(sample, counter, eot_token)
		if mode is PackMode.GREEDY:
			if cost > window_tokens:
				raise OversizeSample(sample.sample_idx, cost, window_tokens)
			if used + cost > window_tokens:
				yield PackedSequence(window_tokens, members, used, texts)
				members, texts, used = [], [], 0
			members.append(sample.sample_idx)
			texts.append(sample.text)
			used += cost
			continue
		remaining = cost
		while remaining:
			if not members or members[-1] != sample.sample_idx:
				members.append(sample.sample_idx)
			take = min(remaining, window_tokens - used)
			used += take
			remaining -= take
			if used == window_tokens:
				yield PackedSequence(window_tokens, members, used)
				members, used = [], 0
	if members:
		yield PackedSequence(window_tokens, members, used, texts if mode is PackMode.GREEDY else None)


def fill_rate(windows):
	windows = list(windows)
	if not windows:
		return 0.0
	return sum(w.used_tokens for w in windows) / sum(w.window_tokens for w in windows)


def flatten_window(sequence, eot_token=DEFAULT_EOT):
	"""
	Flat text of a greedy window: member texts each closed by one end-of-text literal.
	"""
	if sequence.texts is None:
		raise PolicyError('only greedy windows carry member texts')
	return ''.join(strip_eot(text, eot_token) + eot_token for text in sequence.texts)


def corpus_stats(samples, counter=None, window_tokens=2048, eot_token=DEFAULT_EOT, mode=PackMode.GREEDY):
	"""
	Token statistics of a corpus plus the fill rate its packing achieves
	input samples: list of Sample
	return: CorpusStats
	"""
	samples = list(samples)
	if not samples:
		raise ForgeError('cannot compute statistics of an empty corpus')
	counter = counter or TokenCounter.char(ASSEMBLY_CHARS_PER_TOKEN)
	lengths = np.array(
		[content_tokens(sample, counter, eot_token) for sample in samples], dtype=np.int64)
	windows = list(pack(samples, window_tokens, counter, eot_token, mode))
	total = int(lengths.sum())
	return CorpusStats(
		sample_count=len(samples),
		total_tokens=total,
		mean_sample_tokens=total / len(samples),
		packing_fill_rate=fill_rate(windows),
		p50_sample_tokens=float(np.percentile(lengths, 50)),
		p95_sample_tokens=float(np.percentile(lengths, 95)),
		window_count=len(windows),
		window_tokens=window_tokens,
	)


def stats_table(stats, report=None):
	"""Corpus summary table in the layout of the corpus-statistics report."""
	rows = [
		('Total samples', '{:,}'.format(stats.sample_count)),
		('Total tokens', '{:,}'.format(stats.total_tokens)),
		('Average sample length', '~{:,.0f} tokens'.format(stats.mean_sample_tokens)),
		('Median sample length', '{:,.0f} tokens'.format(stats.p50_sample_tokens)),
		('95th percentile length', '{:,.0f} tokens'.format(stats.p95_sample_tokens)),
		('Max sequence length', '{:,} tokens'.format(stats.window_tokens)),
		('Packed windows', '{:,}'.format(stats.window_count)),
		('Packing efficiency', '~{:.0f}% fill rate'.format(100 * stats.packing_fill_rate)),
	]
	if report is not None:
		rows.append(('Truncated samples', '{:,} ({:.2f}%)'.format(
			report.truncated_count, 100 * report.truncated_fraction)))
	return pd.DataFrame(rows, columns=['Metric', 'Value']).to_string(index=False)
