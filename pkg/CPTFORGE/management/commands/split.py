from CPTFORGE.chunking import split_samples
from CPTFORGE.exceptions import ForgeError
from CPTFORGE.ingest import repair_order, verify_order
from CPTFORGE.management.base import ForgeCommand
from CPTFORGE.records import read_records
from CPTFORGE.serializers import SampleSerializer


class Command(ForgeCommand):
	help = 'Splits oversized samples at code boundaries and renumbers the stream from 0'

	def add_command_arguments(self, parser):
		parser.add_argument('--max-chars', type=int, default=None)
		parser.add_argument('--min-chars', type=int, default=None)
		parser.add_argument('--repair-order', action='store_true', help='re-sort the input by sample_idx when the order check fails')

	def overrides(self, options):
		return {'SPLIT_POLICY': {'max_chars': options['max_chars'], 'min_chars': options['min_chars']}}

	def run(self, config, **options):
		samples = list(read_records(SampleSerializer, options['input'], self.stdin(options)))
		if samples and not verify_order(samples).ok:
			if not options['repair_order']:
				raise ForgeError('input sample order check failed; rerun with --repair-order to re-sort')
			samples = repair_order(samples)
		chunks, _ = split_samples(samples, config.split_policy, workers=config.worker_count)
		with self.sink(config, options) as sink:
			sink.write_all(chunk.to_record() for chunk in chunks)
