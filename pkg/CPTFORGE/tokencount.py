"""
Token counting strategies. Every stage that reasons about "tokens" goes
through a TokenCounter so no real tokenizer is needed.
"""
import enum
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

from CPTFORGE.exceptions import MissingCount, PolicyError, RecordError
from CPTFORGE.records import read_text_lines

# Section sizing assumes 3.5 chars/token, assembly truncation 4 chars/token.
SECTION_CHARS_PER_TOKEN = Fraction(7, 2)
ASSEMBLY_CHARS_PER_TOKEN = Fraction(4)

_WORD_RUN = re.compile(r'\S+')


class Strategy(enum.Enum):
	CHAR = 'char'
	WHITESPACE = 'whitespace'
	EXTERNAL = 'external'


def as_fraction(value):
	"""
	Converts a chars-per-token value to an exact Fraction
	input value: int, float, str or Fraction
	return: Fraction, going through str() so 3.5 stays 7/2 and 3.3 stays 33/10
	"""
	if isinstance(value, Fraction):
		return value
	try:
		return Fraction(str(value))
	except (ValueError, ZeroDivisionError):
		raise PolicyError('chars_per_token must be a positive number, got {!r}'.format(value))


@dataclass(frozen=True)
class TokenCounter:
	strategy: Strategy = Strategy.CHAR
	chars_per_token: Fraction = ASSEMBLY_CHARS_PER_TOKEN
	counts: dict = field(default=None, compare=False, repr=False)

	def __post_init__(self):
		if self.strategy is Strategy.CHAR:
			cpt = as_fraction(self.chars_per_token)
			if cpt <= 0:
				raise PolicyError('chars_per_token must be positive, got {}'.format(self.chars_per_token))
			object.__setattr__(self, 'chars_per_token', cpt)
		if self.strategy is Strategy.EXTERNAL and self.counts is None:
			raise PolicyError('the external strategy needs a count table')

	@classmethod
	def char(cls, chars_per_token=ASSEMBLY_CHARS_PER_TOKEN):
		return cls(Strategy.CHAR, chars_per_token)

	@classmethod
	def whitespace(cls):
		return cls(Strategy.WHITESPACE)

	@classmethod
	def external(cls, counts):
		return cls(Strategy.EXTERNAL, counts=dict(counts))

	def count(self, text, sample_idx=None):
		if self.strategy is Strategy.CHAR:
			return math.ceil(Fraction(len(text)) / self.chars_per_token)
		if self.strategy is Strategy.WHITESPACE:
			return len(text.split())
		try:
			return self.counts[sample_idx]
		except KeyError:
			raise MissingCount(sample_idx)

	def prefix_chars(self, text, budget, sample_idx=None, total=None):
		"""
		Length of the longest prefix of text whose count fits in budget tokens
		input text: the string to cut
		input budget: nonnegative token budget
		input sample_idx: key into the count table for the external strategy
		input total: known count of the whole text, replaces the table lookup
		return: character offset in [0, len(text)]
		"""
		if budget < 0:
			raise PolicyError('token budget must be nonnegative, got {}'.format(budget))
		if self.strategy is Strategy.CHAR:
			return min(len(text), math.floor(budget * self.chars_per_token))
		if self.strategy is Strategy.WHITESPACE:
			for seen, run in enumerate(_WORD_RUN.finditer(text)):
				if seen == budget:
					return run.start()
			return len(text)
		# Only a whole-sample count is known, so assume tokens are spread evenly.
		total = self.count(text, sample_idx) if total is None else total
		if total <= budget:
			return len(text)
		return len(text) * budget // total

	def prefix_count(self, text, chars, sample_idx=None, total=None):
		"""Tokens in text[:chars]; the external strategy prorates the whole-text count."""
		if self.strategy is not Strategy.EXTERNAL:
			return self.count(text[:chars])
		total = self.count(text, sample_idx) if total is None else total
		if chars >= len(text):
			return total
		return -(-total * chars // len(text))


def count_tokens(text, counter, sample_idx=None):
	return counter.count(text, sample_idx)


def load_count_file(path):
	"""
	Reads an external count file of `sample_idx<TAB>count` lines
	input path: path to the count file
	return: dict sample_idx -> count
	"""
	counts = {}
	for line_no, line in read_text_lines(path):
		line = line.rstrip('\r\n')
		if not line.strip():
			continue
		parts = line.split('\t')
		try:
			if len(parts) != 2:
				raise ValueError('expected sample_idx<TAB>count')
			idx, count = int(parts[0]), int(parts[1])
			if idx < 0 or count < 0:
				raise ValueError('sample_idx and count must be nonnegative')
		except ValueError as exc:
			raise RecordError(line_no, str(exc))
		counts[idx] = count
	return counts


def counter_from_settings(section):
	"""Builds a TokenCounter from a TOKEN_COUNTER config section."""
	try:
		strategy = Strategy(section.get('strategy', 'char'))
	except ValueError:
		raise PolicyError('unknown token counter strategy {!r}'.format(section.get('strategy')))
	if strategy is Strategy.CHAR:
		return TokenCounter.char(section.get('chars_per_token', ASSEMBLY_CHARS_PER_TOKEN))
	if strategy is Strategy.WHITESPACE:
		return TokenCounter.whitespace()
	if not section.get('count_file'):
		raise PolicyError('the external strategy needs count_file')
	return TokenCounter.external(load_count_file(section['count_file']))
