from CPTFORGE.assembly import PackMode, assemble, corpus_stats, stats_table
from CPTFORGE.management.base import ForgeCommand
from CPTFORGE.records import read_records, render_line
from CPTFORGE.serializers import SampleSerializer


class Command(ForgeCommand):
	help = 'Prints the corpus summary: sample and token counts, length percentiles, packing fill rate'
	record_output = False

	def add_command_arguments(self, parser):
		parser.add_argument('--max-tokens', type=int, default=None)
		parser.add_argument('--mode', choices=[mode.value for mode in PackMode], default=PackMode.GREEDY.value)
		parser.add_argument('--json', action='store_true', help='print the machine record instead of the table')

	def overrides(self, options):
		return {'ASSEMBLY_POLICY': {'max_tokens': options['max_tokens']}}

	def run(self, config, **options):
		policy = config.assembly_policy
		samples = read_records(SampleSerializer, options['input'], self.stdin(options))
		assembled, report = assemble(samples, policy)
		stats = corpus_stats(assembled, policy.counter, policy.max_tokens, policy.eot_token, options['mode'])
		if options['json']:
			record = stats.to_record()
			record['truncated_count'] = report.truncated_count
			record['overflow_chars'] = report.overflow_chars
			self.stdout.write(render_line(record), ending='')
		else:
			self.stdout.write(stats_table(stats, report))
