from CPTFORGE.conf import load_policy
from CPTFORGE.management.base import ForgeCommand
from CPTFORGE.quality import clean_samples
from CPTFORGE.records import read_records
from CPTFORGE.serializers import CleanPolicySerializer, SampleSerializer


class Command(ForgeCommand):
	help = 'Cleans every sample and keeps the ones that pass the quality filter'

	def add_command_arguments(self, parser):
		parser.add_argument('--policy', default=None, help='JSON CleanPolicy document; replaces CLEAN_POLICY')

	def run(self, config, **options):
		policy = config.clean_policy
		if options['policy']:
			policy = load_policy(CleanPolicySerializer, options['policy'])
		samples = list(read_records(SampleSerializer, options['input'], self.stdin(options)))
		kept, _ = clean_samples(samples, policy, workers=config.worker_count)
		with self.sink(config, options) as sink:
			sink.write_all(sample.to_record() for sample in kept)
