"""
Errors raised by the forge stages. Commands map them onto exit codes:
PolicyError is a usage problem, everything else is a data problem.
"""


class ForgeError(Exception):
	"""Base class for every error the pipeline raises on purpose."""


class PolicyError(ForgeError, ValueError):
	"""A policy, config value or plain argument breaks its precondition."""


class RecordError(ForgeError):
	"""A malformed input record. Carries the 1-based line number."""

	def __init__(self, line_no, errors, path=None):
		self.line_no = line_no
		self.errors = errors
		self.path = path
		message = 'line {}: {}'.format(line_no, errors)
		super().__init__('{}: {}'.format(path, message) if path else message)


class MissingCount(ForgeError, KeyError):
	def __init__(self, sample_idx):
		self.sample_idx = sample_idx
		super().__init__('no external token count for sample_idx {}'.format(sample_idx))

	def __str__(self):
		return self.args[0]


class DuplicateIndex(ForgeError):
	def __init__(self, sample_idx):
		self.sample_idx = sample_idx
		super().__init__('sample_idx {} appears more than once'.format(sample_idx))


class MarkerIOError(ForgeError, OSError):
	"""The done-marker directory cannot be read or written."""


class OversizeSample(ForgeError):
	def __init__(self, sample_idx, cost, window_tokens):
		self.sample_idx = sample_idx
		self.cost = cost
		self.window_tokens = window_tokens
		super().__init__(
			'sample {} needs {} tokens but the window holds {} (truncate before packing)'.format(
				sample_idx, cost, window_tokens))


class MissingModuleDims(ForgeError):
	def __init__(self, names):
		self.names = sorted(names)
		super().__init__('no architecture descriptor for: {}'.format(', '.join(self.names)))


class StreamOrder(ForgeError):
	def __init__(self, previous, current, what='step'):
		self.previous = previous
		self.current = current
		super().__init__('{0} {1} arrived after {0} {2}'.format(what, current, previous))


class EmptyEval(ForgeError):
	"""An evaluation was asked for over zero records."""


class TooShort(ForgeError, ValueError):
	"""A token sequence is too short for the teacher-forced split."""


class MissingAxis(ForgeError):
	def __init__(self, axis, run_name=None):
		self.axis = axis
		self.run_name = run_name
		super().__init__('run {} has no level for axis {!r}'.format(run_name or '?', axis))


class MissingCategory(ForgeError):
	def __init__(self, model, categories):
		self.model = model
		self.categories = sorted(categories)
		super().__init__('model {!r} has no score for: {}'.format(model, ', '.join(self.categories)))
