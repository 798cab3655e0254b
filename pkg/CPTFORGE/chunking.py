"""
Code-aware splitting of oversized units. Split points are tried by boundary
kind in the policy's hierarchy, file markers first, and within a kind the
cut closest to max_chars wins.
"""
import bisect
import enum
import logging
import re
from dataclasses import dataclass, field
from functools import partial

from CPTFORGE.exceptions import ForgeError, PolicyError
from CPTFORGE.ingest import Sample
from CPTFORGE.workers import map_ordered

logger = logging.getLogger(__name__)


class BoundaryKind(enum.Enum):
	FILE_MARKER = 'file_marker'
	FUNCTION = 'function'
	STATEMENT = 'statement'


DEFAULT_HIERARCHY = (BoundaryKind.FILE_MARKER, BoundaryKind.FUNCTION, BoundaryKind.STATEMENT)

_CLOSING_BRACE = re.compile(r'^\}[ \t]*\r?(?:\n|\Z)', re.M)
# name(args) at column 0 with an optional opening brace; control keywords are not functions
_FUNCTION_SHAPE = re.compile(
	r'^(?!(?:if|else|for|while|switch|return|do|case|sizeof)\b)'
	r'[A-Za-z_][\w \t*]*\([^;{}\n]*\)[ \t]*\{?[ \t]*\r?$',
	re.M,
)
_STATEMENT_END = re.compile(r';[ \t]*\n')
_BLANK_LINE = re.compile(r'\n[ \t]*\n')


@dataclass(frozen=True)
class SplitPolicy:
	max_chars: int = 7500
	min_chars: int = 50
	hierarchy: tuple = DEFAULT_HIERARCHY
	marker_prefix: str = '// File:'

	def __post_init__(self):
		try:
			hierarchy = tuple(BoundaryKind(kind) for kind in self.hierarchy)
		except ValueError as exc:
			raise PolicyError(str(exc))
		if len(set(hierarchy)) != len(hierarchy):
			raise PolicyError('hierarchy lists a boundary kind twice')
		object.__setattr__(self, 'hierarchy', hierarchy)
		if self.min_chars < 1 or self.max_chars < 1:
			raise PolicyError('min_chars and max_chars must be positive')
		if self.min_chars >= self.max_chars:
			raise PolicyError('min_chars ({}) must be below max_chars ({})'.format(self.min_chars, self.max_chars))


@dataclass
class ChunkResult:
	chunks: list = field(default_factory=list)
	hard_splits: int = 0
	dropped_chunks: int = 0
	dropped_chars: int = 0


def detect_boundaries(text, kind, marker_prefix='// File:'):
	"""
	Character offsets where a chunk may start, for one boundary kind
	input text: the unit text
	input kind: BoundaryKind
	input marker_prefix: prefix that marks a file boundary
	return: sorted list of distinct offsets
	"""
	kind = BoundaryKind(kind)
	if kind is BoundaryKind.FILE_MARKER:
		pattern = re.compile('^' + re.escape(marker_prefix), re.M)
		offsets = [match.start() for match in pattern.finditer(text)]
	elif kind is BoundaryKind.FUNCTION:
		offsets = [match.end() for match in _CLOSING_BRACE.finditer(text)]
		offsets += [match.start() for match in _FUNCTION_SHAPE.finditer(text)]
	else:
		offsets = [match.end() for match in _STATEMENT_END.finditer(text)]
		offsets += [match.end() for match in _BLANK_LINE.finditer(text)]
	return sorted(set(offsets))


def _cut_points(text, policy):
	"""Greedy cut offsets; returns (offsets, hard split count)."""
	boundaries = [detect_boundaries(text, kind, policy.marker_prefix) for kind in policy.hierarchy]
	cuts, hard = [], 0
	start = 0
	while len(text) - start > policy.max_chars:
		limit = start + policy.max_chars
		cut = None
		for offsets in boundaries:
			i = bisect.bisect_right(offsets, limit) - 1
			if i >= 0 and offsets[i] > start:
				cut = offsets[i]
				break
		if cut is None:
			cut = limit
			hard += 1
		cuts.append(cut)
		start = cut
	return cuts, hard


def split_large(text, policy=None):
	"""
	Splits text into chunks no longer than policy.max_chars
	input text: non-empty unit text
	input policy: SplitPolicy
	return: ChunkResult; joining its chunks gives text minus the dropped pieces
	"""
	policy = policy or SplitPolicy()
	if not text:
		raise ForgeError('cannot split an empty text')
	cuts, hard = _cut_points(text, policy)
	if hard:
		logger.debug('%d hard splits in a %d-char unit', hard, len(text))
	bounds = [0] + cuts + [len(text)]
	pieces = [text[a:b] for a, b in zip(bounds, bounds[1:])]

	result = ChunkResult(hard_splits=hard)
	carry = ''
	for piece in pieces:
		if carry:
			if len(carry) + len(piece) <= policy.max_chars:
				piece = carry + piece
			else:
				result.dropped_chunks += 1
				result.dropped_chars += len(carry)
			carry = ''
		if len(piece) < policy.min_chars:
			carry = piece
		else:
			result.chunks.append(piece)
	if carry:
		result.dropped_chunks += 1
		result.dropped_chars += len(carry)
	return result


def split_samples(samples, policy=None, workers=1):
	"""
	Chunks a stream of samples and renumbers the output contiguously from 0
	input samples: list of Sample
	input workers: process count for the per-sample split
	return: (list of Sample, ChunkResult holding the totals and no chunks)
	"""
	policy = policy or SplitPolicy()
	results = map_ordered(partial(split_large, policy=policy), [sample.text for sample in samples], workers)
	totals = ChunkResult()
	out = []
	for sample, result in zip(samples, results):
		totals.hard_splits += result.hard_splits
		totals.dropped_chunks += result.dropped_chunks
		totals.dropped_chars += result.dropped_chars
		for chunk in result.chunks:
			out.append(Sample(
				sample_idx=len(out),
				text=chunk,
				category=sample.category,
				source_file=sample.source_file,
				origin_path=sample.origin_path,
			))
	logger.info(
		'split %d samples into %d chunks: %d hard splits, %d pieces dropped (%d chars)',
		len(samples), len(out), totals.hard_splits, totals.dropped_chunks, totals.dropped_chars)
	return out, totals
