"""
Garbage cleaning and the accept/reject gate applied to every sample.
"""
import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace
from functools import partial
from typing import Optional

from CPTFORGE.exceptions import PolicyError
from CPTFORGE.workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_CODE_INDICATORS = (
	'#include', '#define', 'void', 'int', 'struct', 'typedef',
	'if', 'for', 'while', 'switch', 'return',
)

# share of a line's visible chars that makes it drawing rather than text
ART_LINE_SHARE = 0.8
ART_LINE_MIN_CHARS = 3

_EMPTY_BLOCK_COMMENT = re.compile(r'/\*[^A-Za-z0-9]*?\*/')
_EMPTY_LINE_COMMENT = re.compile(r'^[ \t]*//[^A-Za-z0-9\n]*(?:\n|\Z)', re.M)


class RejectReason(enum.Enum):
	GARBAGE_RATIO = 'GarbageRatio'
	NO_CODE_NO_PROSE = 'NoCodeNoProse'
	TOO_SHORT = 'TooShort'


@dataclass(frozen=True)
class CleanPolicy:
	separator_min_run: int = 10
	separator_chars: str = '-=*_'
	repeat_min_run: int = 10
	repeat_reduce_to: int = 3
	tab_width: int = 4
	garbage_reject_threshold: float = 0.70
	min_nl_words: int = 20
	code_indicators: tuple = DEFAULT_CODE_INDICATORS

	def __post_init__(self):
		object.__setattr__(self, 'code_indicators', tuple(self.code_indicators))
		for name in ('separator_min_run', 'repeat_min_run', 'repeat_reduce_to', 'tab_width', 'min_nl_words'):
			if getattr(self, name) < 1:
				raise PolicyError('{} must be positive'.format(name))
		if self.repeat_reduce_to >= self.repeat_min_run:
			raise PolicyError('repeat_reduce_to ({}) must be below repeat_min_run ({})'.format(
				self.repeat_reduce_to, self.repeat_min_run))
		if not 0 < self.garbage_reject_threshold <= 1:
			raise PolicyError('garbage_reject_threshold must be in (0, 1]')
		if not self.separator_chars:
			raise PolicyError('separator_chars must not be empty')


@dataclass(frozen=True)
class CleanReport:
	removed_chars: int
	garbage_ratio_before: float
	accepted: bool = False
	reject_reason: Optional[RejectReason] = None
	original_len: int = 0
	cleaned_len: int = 0


class _Cleaner:
	"""Compiled patterns for one CleanPolicy."""

	def __init__(self, policy):
		self.policy = policy
		seps = re.escape(policy.separator_chars)
		self.separator_line = re.compile(
			r'^[ \t]*([{}])\1{{{},}}[ \t]*(?:\n|\Z)'.format(seps, policy.separator_min_run - 1), re.M)
		self.repeat_run = re.compile(r'(.)\1{{{},}}'.format(policy.repeat_min_run - 1), re.S)
		self.art_chars = set(policy.separator_chars) | {'+', '|'}

	def is_art(self, line):
		visible = [char for char in line if not char.isspace()]
		if len(visible) < ART_LINE_MIN_CHARS:
			return False
		drawn = sum(1 for char in visible if char in self.art_chars or '\u2500' <= char <= '\u259f')
		return drawn >= ART_LINE_SHARE * len(visible)

	def drop_art_lines(self, text):
		lines = text.split('\n')
		kept = [i for i, line in enumerate(lines) if not self.is_art(line)]
		if len(kept) == len(lines):
			return text
		return '\n'.join(lines[i] for i in kept)

	def one_pass(self, text):
		text = text.replace('\r', '')
		text = text.replace('\t', ' ' * self.policy.tab_width)
		text = self.separator_line.sub('', text)
		text = self.repeat_run.sub(lambda m: m.group(1) * self.policy.repeat_reduce_to, text)
		text = self.drop_art_lines(text)
		text = _EMPTY_BLOCK_COMMENT.sub('', text)
		text = _EMPTY_LINE_COMMENT.sub('', text)
		return text

	def run(self, text):
		while True:
			cleaned = self.one_pass(text)
			if cleaned == text:
				return cleaned
			text = cleaned


def expanded_len(text, policy):
	"""Length of text once its tabs are expanded, the base of the garbage ratio."""
	return len(text) + text.count('\t') * (policy.tab_width - 1)


def clean(text, policy=None):
	"""
	Runs the cleaning steps until nothing changes
	input text: sample text
	input policy: CleanPolicy
	return: (cleaned text, CleanReport with the removal figures filled in)
	"""
	policy = policy or CleanPolicy()
	cleaned = _Cleaner(policy).run(text)
	original = expanded_len(text, policy)
	removed = original - len(cleaned)
	return cleaned, CleanReport(
		removed_chars=removed,
		garbage_ratio_before=removed / original if original else 0.0,
		original_len=original,
		cleaned_len=len(cleaned),
	)


def _indicator_pattern(indicators):
	alternatives = '|'.join(re.escape(indicator) for indicator in sorted(indicators, key=len, reverse=True))
	return re.compile(r'(?<!\w)(?:{})(?!\w)'.format(alternatives))


def accept(cleaned, removed_chars, original_len, policy=None):
	"""
	Decides whether a cleaned sample is kept
	input cleaned: output of clean
	input removed_chars: characters clean took out
	input original_len: tab-expanded length before cleaning
	return: (accepted, RejectReason or None)
	"""
	policy = policy or CleanPolicy()
	if original_len < len(cleaned):
		raise PolicyError('original_len is shorter than the cleaned text')
	if original_len and removed_chars / original_len > policy.garbage_reject_threshold:
		return False, RejectReason.GARBAGE_RATIO
	if not cleaned.strip():
		return False, RejectReason.TOO_SHORT
	if policy.code_indicators and _indicator_pattern(policy.code_indicators).search(cleaned):
		return True, None
	words = sum(1 for word in cleaned.split() if any(char.isalpha() for char in word))
	if words >= policy.min_nl_words:
		return True, None
	return False, RejectReason.NO_CODE_NO_PROSE


def filter_sample(text, policy=None):
	"""Cleans text and decides on it; returns (cleaned, complete CleanReport)."""
	policy = policy or CleanPolicy()
	cleaned, report = clean(text, policy)
	accepted, reason = accept(cleaned, report.removed_chars, report.original_len, policy)
	return cleaned, replace(report, accepted=accepted, reject_reason=reason)


def clean_samples(samples, policy=None, workers=1):
	"""
	Filters a sample stream, keeping sample_idx of the survivors
	return: (kept samples, Counter of RejectReason)
	"""
	policy = policy or CleanPolicy()
	results = map_ordered(partial(filter_sample, policy=policy), [sample.text for sample in samples], workers)
	kept, rejected = [], Counter()
	for sample, (cleaned, report) in zip(samples, results):
		if report.accepted:
			kept.append(replace(sample, text=cleaned, token_count=None))
		else:
			rejected[report.reject_reason] += 1
	logger.info('kept %d of %d samples', len(kept), len(samples))
	for reason, count in sorted(rejected.items(), key=lambda item: item[0].value):
		logger.info('rejected %d samples: %s', count, reason.value)
	return kept, rejected
