import logging
import sys

from django.core.management.base import BaseCommand, CommandError

from CPTFORGE.conf import load_pipeline_config
from CPTFORGE.exceptions import ForgeError, PolicyError
from CPTFORGE.records import RecordSink

logger = logging.getLogger('CPTFORGE.commands')

USAGE_ERROR = 1
DATA_ERROR = 2
EMERGENCY_SAVE = 3


class ForgeCommand(BaseCommand):
	"""
	Base of every forge subcommand. Subclasses implement run(config, **options);
	domain errors come back out as CommandError carrying the exit code.
	"""

	stealth_options = ('stdin',)
	# False for commands that read no record stream
	record_input = True
	# False for commands that only print reports
	record_output = True

	def add_arguments(self, parser):
		if self.record_input:
			parser.add_argument('--input', default='-', help='JSONL file, shard directory or - for stdin')
		parser.add_argument('--config', dest='config_path', default=None, help='JSON config merged over the settings defaults')
		parser.add_argument('--workers', type=int, default=None)
		if self.record_output:
			parser.add_argument('--output-dir', default=None, help='write part-NNNNN.jsonl shards here instead of stdout')
			parser.add_argument('--shard-size', type=int, default=None)
		self.add_command_arguments(parser)

	def add_command_arguments(self, parser):
		pass

	def overrides(self, options):
		"""The FORGE-shaped dict of what the flags set."""
		return {}

	def _overrides(self, options):
		merged = {}
		if options.get('workers') is not None:
			merged['WORKER_COUNT'] = options['workers']
		if options.get('shard_size') is not None:
			merged['SHARD_SIZE_RECORDS'] = options['shard_size']
		for key, value in self.overrides(options).items():
			if isinstance(value, dict):
				value = {name: item for name, item in value.items() if item is not None}
				if value:
					merged[key] = value
			elif value is not None:
				merged[key] = value
		return merged

	def sink(self, config, options):
		return RecordSink(
			stream=self.stdout,
			output_dir=options.get('output_dir'),
			shard_size=config.shard_size_records,
		)

	def stdin(self, options):
		return options.get('stdin') or sys.stdin

	def handle(self, *args, **options):
		try:
			config = load_pipeline_config(self._overrides(options), options.get('config_path'))
			self.run(config, **options)
		except PolicyError as exc:
			raise CommandError(str(exc), returncode=USAGE_ERROR)
		except ForgeError as exc:
			logger.debug('data error', exc_info=True)
			raise CommandError(str(exc), returncode=DATA_ERROR)
		except (OSError, UnicodeDecodeError) as exc:
			raise CommandError(str(exc), returncode=DATA_ERROR)

	def run(self, config, **options):
		raise NotImplementedError('subclasses of ForgeCommand must provide a run() method')


def parse_level(text):
	for cast in (int, float):
		try:
			return cast(text)
		except ValueError:
			pass
	return text


def parse_axis(text):
	"""`rank=128,256,512` -> ('rank', [128, 256, 512])"""
	name, sep, levels = text.partition('=')
	if not sep or not name or not levels:
		raise PolicyError('expected AXIS=LEVEL[,LEVEL...], got {!r}'.format(text))
	return name, [parse_level(level) for level in levels.split(',')]


def parse_rule(text):
	"""`rank=512,lr=5e-5` -> {'rank': 512, 'lr': 5e-05}"""
	rule = {}
	for pair in text.split(','):
		name, sep, level = pair.partition('=')
		if not sep or not name:
			raise PolicyError('expected AXIS=LEVEL[,AXIS=LEVEL...], got {!r}'.format(text))
		rule[name] = parse_level(level)
	return rule
