from CPTFORGE.management.base import ForgeCommand, parse_axis
from CPTFORGE.planning import sweep_cost
from CPTFORGE.records import read_records
from CPTFORGE.serializers import SweepRunSerializer
from CPTFORGE.sweep import grad_stats, grad_table, marginal_effects, marginal_table, reduction, sweep_table


class Command(ForgeCommand):
	help = 'Analyses sweep run summaries: reductions, marginal effects per axis, gradient statistics'

	def add_command_arguments(self, parser):
		parser.add_argument('--runs', default=None, help='SweepRun JSONL; same as --input')
		parser.add_argument('--grads', default=None, help='separate JSONL of runs carrying peak/mean grad norms')
		parser.add_argument('--axis', action='append', default=[], help='axis to average over; every shared config key when omitted')
		parser.add_argument('--levels', action='append', default=[], metavar='AXIS=LEVELS', help='level order of an axis')
		parser.add_argument('--hours-per-run', type=float, default=None)
		parser.add_argument('--json', action='store_true', help='write machine records instead of the tables')

	def run(self, config, **options):
		runs = list(read_records(SweepRunSerializer, options['runs'] or options['input'], self.stdin(options)))
		grads = list(read_records(SweepRunSerializer, options['grads'])) if options['grads'] else runs
		levels = dict(parse_axis(text) for text in options['levels'])
		scored = [run for run in runs if run.init_loss is not None and run.final_loss is not None]
		axes = options['axis']
		if not axes and scored:
			shared = set.intersection(*(set(run.config) for run in scored))
			axes = [axis for axis in scored[0].config if axis in shared]
		effects = [marginal_effects(scored, axis, levels.get(axis)) for axis in axes]
		rows = grad_stats(grads)
		cost = sweep_cost(len(runs), options['hours_per_run']) if options['hours_per_run'] is not None else None

		if options['json']:
			with self.sink(config, options) as sink:
				for run in scored:
					sink.write({'kind': 'run', 'name': run.name, 'config': run.config, 'reduction_pct': reduction(run)})
				for effect in effects:
					sink.write(dict(effect.to_record(), kind='marginal'))
				for row in rows:
					sink.write({
						'kind': 'grad', 'name': row.name, 'peak_grad': row.peak_grad,
						'mean_grad': row.mean_grad, 'duplicate': row.duplicate,
					})
				if cost is not None:
					sink.write({'kind': 'cost', 'runs': len(runs), 'gpu_hours': cost})
			return

		sections = []
		if scored:
			sections.append(sweep_table(scored).to_string(index=False))
		if effects:
			sections.append(marginal_table(effects).to_string(index=False))
		if rows:
			sections.append(grad_table(rows).to_string(index=False))
		if cost is not None:
			sections.append('Total sweep cost: {:.1f} GPU-hours over {} runs'.format(cost, len(runs)))
		self.stdout.write('\n\n'.join(sections))
