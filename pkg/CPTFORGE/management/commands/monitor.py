from django.core.management.base import CommandError

from CPTFORGE.management.base import EMERGENCY_SAVE, ForgeCommand
from CPTFORGE.monitor import summarize
from CPTFORGE.records import read_records
from CPTFORGE.serializers import RunEventSerializer


class Command(ForgeCommand):
	help = 'Replays a training log through the anomaly monitor; exits 3 if an emergency save fired'

	def add_command_arguments(self, parser):
		parser.add_argument('--loss-spike-factor', type=float, default=None)
		parser.add_argument('--grad-spike-factor', type=float, default=None)
		parser.add_argument('--window', type=int, default=None, help='loss, gradient and throughput window length')
		parser.add_argument('--anchor-step', type=int, default=None, help='step whose loss counts as the initial loss')

	def overrides(self, options):
		return {'MONITOR': {
			'loss_spike_factor': options['loss_spike_factor'],
			'grad_spike_factor': options['grad_spike_factor'],
			'loss_window': options['window'],
			'grad_window': options['window'],
			'throughput_window': options['window'],
			'summary_anchor_step': options['anchor_step'],
		}}

	def run(self, config, **options):
		events = read_records(RunEventSerializer, options['input'], self.stdin(options))
		with self.sink(config, options) as sink:
			summary = summarize(events, config.monitor, sink=lambda finding: sink.write(finding.to_record()))
			sink.write(summary.to_record())
		if summary.emergency_saves:
			raise CommandError(
				'{} emergency save(s) during the run'.format(summary.emergency_saves), returncode=EMERGENCY_SAVE)
