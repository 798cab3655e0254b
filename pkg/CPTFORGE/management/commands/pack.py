from CPTFORGE.assembly import PackMode, assemble, flatten_window, pack
from CPTFORGE.exceptions import PolicyError
from CPTFORGE.management.base import ForgeCommand
from CPTFORGE.records import read_records
from CPTFORGE.serializers import SampleSerializer


class Command(ForgeCommand):
	help = 'Truncates, terminates and packs samples into fixed token windows'

	def add_command_arguments(self, parser):
		parser.add_argument('--max-tokens', type=int, default=None, help='token budget per sample and window size')
		parser.add_argument('--eot', default=None, help='end-of-text literal')
		parser.add_argument('--mode', choices=[mode.value for mode in PackMode], default=PackMode.GREEDY.value)
		parser.add_argument('--flat', action='store_true', help='emit the flat window text along with the members')
		parser.add_argument('--samples', action='store_true', help='emit the terminated samples instead of windows')

	def overrides(self, options):
		return {'ASSEMBLY_POLICY': {'max_tokens': options['max_tokens'], 'eot_token': options['eot']}}

	def run(self, config, **options):
		policy = config.assembly_policy
		mode = PackMode(options['mode'])
		if options['flat'] and mode is not PackMode.GREEDY:
			raise PolicyError('--flat needs --mode greedy')
		samples = read_records(SampleSerializer, options['input'], self.stdin(options))
		assembled, _ = assemble(samples, policy)
		with self.sink(config, options) as sink:
			if options['samples']:
				sink.write_all(sample.to_record() for sample in assembled)
				return
			for window in pack(assembled, policy.max_tokens, policy.counter, policy.eot_token, mode):
				record = window.to_record()
				if options['flat']:
					record['text'] = flatten_window(window, policy.eot_token)
				sink.write(record)
