"""
Corpus ingest: raw mapping files -> ordered Samples.

A document is cut into sections at full-line delimiter rows, each section
into file units at `// File:` markers, and every unit becomes a Sample
whose sample_idx is its position in document order.
"""
import itertools
import logging
import os
import time
from dataclasses import asdict, dataclass
from typing import Optional

from CPTFORGE.exceptions import DuplicateIndex, ForgeError, MarkerIOError, PolicyError, RecordError
from CPTFORGE.records import decode_text, read_text_lines
from CPTFORGE.workers import map_ordered

logger = logging.getLogger(__name__)

GENERAL = 'general'
CATEGORIES = (
	'wireless_ble_wifi',
	'linux_kernel',
	'nxp_imx',
	'device_tree',
	'usb_stack',
	'zephyr_rtos',
	'crypto',
	'arm_cortex_asm',
	'stm32_hal',
	'infineon_aurix',
	'amd_gpu_registers',
	'register_defines',
	GENERAL,
)

SOURCE_SUFFIXES = ('.c', '.h', '.S', '.s', '.dts', '.dtsi', '.asm', '.txt', '.md')

DONE_MARKER = '.done'


@dataclass(frozen=True)
class RawDocument:
	path: str
	content: str
	category: str = GENERAL

	def __post_init__(self):
		if not self.content:
			raise ForgeError('document {} is empty'.format(self.path))


@dataclass
class Sample:
	sample_idx: int
	text: str
	category: str = GENERAL
	source_file: Optional[str] = None
	origin_path: str = ''
	# content tokens of text without its end-of-text literal, set once assembly has counted them
	token_count: Optional[int] = None

	def to_record(self):
		record = asdict(self)
		if record['token_count'] is None:
			del record['token_count']
		return record


@dataclass(frozen=True)
class OrderReport:
	first_ok: bool
	last_ok: bool
	prefix_sequential_ok: bool

	@property
	def ok(self):
		return self.first_ok and self.last_ok and self.prefix_sequential_ok


def _lines(text):
	"""Splits on '\\n' only, keeping the terminator on every line but the last."""
	lines = [line + '\n' for line in text.split('\n')]
	lines[-1] = lines[-1][:-1]
	if not lines[-1]:
		lines.pop()
	return lines


def split_sections(doc, delimiter_char='=', delimiter_len=82):
	"""
	Cuts a document at lines made of exactly delimiter_len delimiter_char characters
	input doc: RawDocument or plain string
	input delimiter_char: the delimiter character
	input delimiter_len: how many of them make a delimiter line
	return: list of section strings, whitespace-only sections dropped
	"""
	if delimiter_len < 1 or len(delimiter_char) != 1:
		raise PolicyError('delimiter must be one character repeated at least once')
	content = getattr(doc, 'content', doc)
	delimiter = delimiter_char * delimiter_len
	sections, current = [], []
	for line in _lines(content):
		# trailing spaces and a CR from CRLF files still count as a delimiter line
		if line.rstrip() == delimiter:
			sections.append(''.join(current))
			current = []
		else:
			current.append(line)
	sections.append(''.join(current))
	return [section for section in sections if section.strip()]


def split_file_units(section, marker_prefix='// File:', retain_marker=True):
	"""
	Cuts a section at file-marker lines
	input section: section text
	input marker_prefix: prefix that opens a new file unit
	input retain_marker: keep the marker line at the head of each body
	return: list of (source_file, body) pairs; text before the first marker has source_file None
	"""
	units = []
	source_file, body = None, []
	for line in _lines(section):
		if line.startswith(marker_prefix):
			if body or source_file is not None:
				units.append((source_file, ''.join(body)))
			source_file = line[len(marker_prefix):].strip()
			body = [line] if retain_marker else []
		else:
			body.append(line)
	if body or source_file is not None:
		units.append((source_file, ''.join(body)))
	return units


def verify_order(samples, prefix_len=1000):
	"""
	Checks that sample_idx starts at 0, ends at N-1 and that the first prefix_len are sequential
	input samples: ordered list of Sample
	return: OrderReport
	"""
	if not samples:
		raise ForgeError('cannot verify the order of an empty sample list')
	seen = set()
	for sample in samples:
		if sample.sample_idx in seen:
			raise DuplicateIndex(sample.sample_idx)
		seen.add(sample.sample_idx)
	head = samples[:prefix_len]
	report = OrderReport(
		first_ok=samples[0].sample_idx == 0,
		last_ok=samples[-1].sample_idx == len(samples) - 1,
		prefix_sequential_ok=all(sample.sample_idx == i for i, sample in enumerate(head)),
	)
	if not report.ok:
		logger.warning('sample order check failed: %s', report)
	return report


def repair_order(samples):
	repaired = sorted(samples, key=lambda sample: sample.sample_idx)
	logger.warning('re-sorted %d samples by sample_idx', len(repaired))
	return repaired


def write_done_marker(directory):
	path = os.path.join(directory, DONE_MARKER)
	try:
		with open(path, 'w', encoding='utf-8'):
			pass
	except OSError as exc:
		raise MarkerIOError('cannot write {}: {}'.format(path, exc))
	return path


def _marker_present(directory):
	try:
		return DONE_MARKER in os.listdir(directory)
	except OSError as exc:
		raise MarkerIOError('cannot read {}: {}'.format(directory, exc))


def await_done_marker(directory, poll_interval_s=5, log_every_s=60, sleep=time.sleep, clock=time.monotonic):
	"""
	Blocks until the done marker shows up in directory
	input poll_interval_s: seconds between checks
	input log_every_s: seconds between progress lines
	return: number of polls waited, 0 if the marker was already there
	"""
	if poll_interval_s <= 0 or log_every_s <= 0:
		raise PolicyError('poll_interval_s and log_every_s must be positive')
	polls = 0
	started = last_log = clock()
	while not _marker_present(directory):
		sleep(poll_interval_s)
		polls += 1
		now = clock()
		if now - last_log >= log_every_s:
			logger.info('still waiting for %s after %.0f s', os.path.join(directory, DONE_MARKER), now - started)
			last_log = now
	return polls


def load_manifest(path):
	"""Reads a `path<TAB>category` sidecar into a dict."""
	manifest = {}
	for line_no, line in read_text_lines(path):
		line = line.rstrip('\r\n')
		if not line.strip() or line.startswith('#'):
			continue
		parts = line.split('\t')
		if len(parts) != 2 or not parts[0] or not parts[1]:
			raise RecordError(line_no, 'expected path<TAB>category')
		manifest[os.path.normpath(parts[0])] = parts[1].strip()
	return manifest


def resolve_category(label):
	if label in CATEGORIES:
		return label
	logger.warning('unknown category %r, using %s', label, GENERAL)
	return GENERAL


def discover_documents(root, manifest=None):
	"""
	Walks root in sorted order and returns the RawDocuments to ingest
	input root: directory tree of raw corpus files
	input manifest: optional dict relative path -> category
	return: list of RawDocument
	"""
	manifest = manifest or {}
	documents = []
	for dirpath, dirnames, filenames in os.walk(root):
		dirnames.sort()
		for name in sorted(filenames):
			if name == DONE_MARKER:
				continue
			full = os.path.join(dirpath, name)
			rel = os.path.normpath(os.path.relpath(full, root))
			if rel not in manifest and not name.endswith(SOURCE_SUFFIXES):
				continue
			if rel in manifest:
				category = resolve_category(manifest[rel])
			else:
				top = rel.split(os.sep)[0] if os.sep in rel else GENERAL
				category = resolve_category(top)
			with open(full, 'rb') as handle:
				content = decode_text(handle.read(), rel)
			if not content:
				logger.warning('skipping empty file %s', rel)
				continue
			documents.append(RawDocument(path=rel, content=content, category=category))
	return documents


def document_units(doc, delimiter_char='=', delimiter_len=82, marker_prefix='// File:', retain_marker=True):
	units = []
	for section in split_sections(doc, delimiter_char, delimiter_len):
		units.extend(split_file_units(section, marker_prefix, retain_marker))
	return units


def _document_units_job(job):
	doc, options = job
	return doc, document_units(doc, **options)


def ingest_documents(documents, workers=1, **options):
	"""
	Turns documents into Samples. Documents fan out to a worker pool but
	sample_idx is handed out here, in document order.
	"""
	results = map_ordered(_document_units_job, [(doc, options) for doc in documents], workers, chunksize=1)
	samples = []
	counter = itertools.count()
	for doc, units in results:
		for source_file, body in units:
			if not body.strip():
				continue
			samples.append(Sample(
				sample_idx=next(counter),
				text=body,
				category=doc.category,
				source_file=source_file,
				origin_path=doc.path,
			))
	logger.info('ingested %d documents into %d samples', len(documents), len(samples))
	return samples


def ingest_tree(root, manifest=None, workers=1, **options):
	if not os.path.isdir(root):
		raise PolicyError('input root {} is not a directory'.format(root))
	return ingest_documents(discover_documents(root, manifest), workers=workers, **options)
