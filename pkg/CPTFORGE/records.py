"""
JSON Lines plumbing shared by every subcommand: line-numbered reading
through a serializer, and rendering through the REST framework
JSONRenderer, either to one stream or to fixed-size shards.
"""
import glob
import json
import logging
import os
import sys

from rest_framework.renderers import JSONRenderer

from CPTFORGE.exceptions import PolicyError, RecordError

logger = logging.getLogger(__name__)

SHARD_PATTERN = 'part-{:05d}.jsonl'

_renderer = JSONRenderer()


def render_line(record):
	"""One record as a compact JSON line; NaN and Infinity are written bare."""
	return _renderer.render(record).decode('utf-8') + '\n'


def _input_files(path):
	if os.path.isdir(path):
		files = sorted(glob.glob(os.path.join(path, 'part-*.jsonl')))
		if not files:
			raise PolicyError('no part-*.jsonl shards in {}'.format(path))
		return files
	return [path]


def _not_utf8(exc):
	return 'not valid UTF-8 ({})'.format(exc.reason)


def decode_text(data, path):
	"""
	Decodes a whole file's bytes
	return: str, line endings untouched
	raise: RecordError naming the line that holds the first bad byte
	"""
	try:
		return data.decode('utf-8')
	except UnicodeDecodeError as exc:
		raise RecordError(data.count(b'\n', 0, exc.start) + 1, _not_utf8(exc), path=path)


def read_text_lines(path):
	"""Yields (line_no, line) of a UTF-8 text file, decoding one line at a time."""
	with open(path, 'rb') as handle:
		for line_no, raw in enumerate(handle, start=1):
			try:
				yield line_no, raw.decode('utf-8')
			except UnicodeDecodeError as exc:
				raise RecordError(line_no, _not_utf8(exc), path=path)


def _stream_lines(stream):
	line_no = 0
	lines = iter(stream)
	while True:
		try:
			line = next(lines)
		except StopIteration:
			return
		except UnicodeDecodeError as exc:
			raise RecordError(line_no + 1, _not_utf8(exc), path='<stdin>')
		line_no += 1
		yield line_no, line


def iter_lines(path='-', stdin=None):
	"""
	Yields (line_no, line) over an input file, a shard directory or stdin
	input path: file path, directory of part-*.jsonl shards, or '-' for stdin
	return: generator; numbering runs on across shards as if they were one file
	"""
	if path in (None, '-'):
		yield from _stream_lines(stdin or sys.stdin)
		return
	offset = 0
	for name in _input_files(path):
		line_no = 0
		for line_no, line in read_text_lines(name):
			yield offset + line_no, line
		offset += line_no


def parse_line(line_no, line):
	try:
		data = json.loads(line)
	except ValueError as exc:
		raise RecordError(line_no, 'invalid JSON ({})'.format(exc))
	if not isinstance(data, dict):
		raise RecordError(line_no, 'expected a JSON object')
	return data


def _flatten_errors(errors):
	if isinstance(errors, dict):
		return '; '.join('{}: {}'.format(key, _flatten_errors(value)) for key, value in errors.items())
	if isinstance(errors, list):
		return ' '.join(_flatten_errors(value) for value in errors)
	return str(errors)


def read_records(serializer_class, path='-', stdin=None, context=None):
	"""
	Validates every non-blank line with serializer_class and yields the objects its create() builds
	input serializer_class: a serializers.Serializer subclass
	return: generator of domain objects
	"""
	for line_no, line in iter_lines(path, stdin):
		if not line.strip():
			continue
		serializer = serializer_class(data=parse_line(line_no, line), context=context or {})
		if not serializer.is_valid():
			raise RecordError(line_no, _flatten_errors(serializer.errors))
		yield serializer.save()


def load_json(path):
	"""A single JSON document, for policy files and score matrices."""
	try:
		with open(path, encoding='utf-8') as handle:
			return json.load(handle)
	except ValueError as exc:
		raise RecordError(getattr(exc, 'lineno', 1), 'invalid JSON in {} ({})'.format(path, exc))


class RecordSink:
	"""
	Writes rendered records to a stream, or to output_dir as numbered shards of
	shard_size records. Concatenating the shards in name order gives exactly the
	bytes the stream mode would have written.
	"""

	def __init__(self, stream=None, output_dir=None, shard_size=100000):
		if output_dir is None and stream is None:
			raise PolicyError('a record sink needs a stream or an output directory')
		if shard_size < 1:
			raise PolicyError('shard size must be at least 1')
		self.stream = stream
		self.output_dir = output_dir
		self.shard_size = shard_size
		self.count = 0
		self.shards = []
		self._handle = None

	def __enter__(self):
		return self

	def __exit__(self, *exc_info):
		self.close()
		return False

	def _shard_handle(self):
		if self._handle is None or self.count % self.shard_size == 0:
			self._close_shard()
			os.makedirs(self.output_dir, exist_ok=True)
			name = os.path.join(self.output_dir, SHARD_PATTERN.format(len(self.shards)))
			self._handle = open(name, 'w', encoding='utf-8', newline='\n')
			self.shards.append(name)
		return self._handle

	def _close_shard(self):
		if self._handle is not None:
			self._handle.close()
			self._handle = None

	def write(self, record):
		line = render_line(record)
		if self.output_dir is None:
			self.stream.write(line)
		else:
			self._shard_handle().write(line)
		self.count += 1

	def write_all(self, records):
		for record in records:
			self.write(record)
		return self.count

	def close(self):
		self._close_shard()
		if self.output_dir is not None:
			logger.info('wrote %d records in %d shards to %s', self.count, len(self.shards), self.output_dir)
