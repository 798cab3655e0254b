import logging
from dataclasses import replace

from CPTFORGE.exceptions import PolicyError
from CPTFORGE.management.base import ForgeCommand, parse_axis, parse_rule
from CPTFORGE.planning import (
	TARGET_PRESETS, LoraConfig, PlanReport, TrainPlan, factorial_grid, load_architecture,
	max_stable_lr, steps_for_tokens, sweep_cost,
)
from CPTFORGE.records import render_line

logger = logging.getLogger('CPTFORGE.commands.plan')

DEFAULT_STEPS = 1000


class Command(ForgeCommand):
	help = 'Resolves a LoRA training plan, or expands a factorial sweep grid with --grid'
	record_input = False
	record_output = False

	def add_command_arguments(self, parser):
		parser.add_argument('--arch', default=None, help='architecture descriptor for the parameter count')
		parser.add_argument('--rank', type=int, default=512)
		parser.add_argument('--alpha', type=float, default=None, help='2 x rank when omitted')
		parser.add_argument('--dropout', type=float, default=0.05)
		parser.add_argument('--no-rslora', action='store_true')
		parser.add_argument('--targets', default='full', help='{} or a comma list of module names'.format(' | '.join(TARGET_PRESETS)))
		parser.add_argument('--bdev', type=int, default=4, help='per-device batch')
		parser.add_argument('--gacc', type=int, default=8, help='gradient accumulation steps')
		parser.add_argument('--gpus', type=int, default=8)
		parser.add_argument('--seq', type=int, default=2048)
		parser.add_argument('--lr', type=float, default=1.5e-5)
		parser.add_argument('--embed-ratio', type=float, default=0.5)
		parser.add_argument('--min-lr', type=float, default=0.0)
		parser.add_argument('--warmup', type=float, default=0.10)
		parser.add_argument('--steps', type=int, default=None)
		parser.add_argument('--token-budget', type=int, default=None, help='derive --steps from a token budget')
		parser.add_argument('--max-grad-norm', type=float, default=5.0)
		parser.add_argument('--seed', type=int, default=3407)
		parser.add_argument('--ref-rank', type=int, default=None, help='rank of a run known to be stable')
		parser.add_argument('--ref-lr', type=float, default=None, help='its learning rate')
		parser.add_argument('--grid', action='append', default=[], metavar='AXIS=LEVELS')
		parser.add_argument('--exclude', action='append', default=[], metavar='AXIS=LEVEL,...')
		parser.add_argument('--hours-per-run', type=float, default=None)
		parser.add_argument('--json', action='store_true', help='print the machine record instead of the table')

	def run(self, config, **options):
		if options['grid']:
			self.run_grid(options)
			return
		targets = options['targets']
		if targets not in TARGET_PRESETS:
			targets = tuple(name.strip() for name in targets.split(',') if name.strip())
		lora = LoraConfig(
			rank=options['rank'],
			alpha=options['alpha'],
			dropout=options['dropout'],
			rslora=not options['no_rslora'],
			target_modules=targets,
		)
		plan = TrainPlan(
			per_device_batch=options['bdev'],
			grad_accum=options['gacc'],
			n_gpu=options['gpus'],
			seq_len=options['seq'],
			main_lr=options['lr'],
			total_steps=options['steps'] or DEFAULT_STEPS,
			embed_lr_ratio=options['embed_ratio'],
			min_lr=options['min_lr'],
			warmup_frac=options['warmup'],
			max_grad_norm=options['max_grad_norm'],
			seed=options['seed'],
		)
		if options['token_budget'] is not None:
			if options['steps'] is not None:
				raise PolicyError('give either --steps or --token-budget')
			plan = replace(plan, total_steps=steps_for_tokens(options['token_budget'], plan))
		modules = load_architecture(options['arch']) if options['arch'] else []
		report = PlanReport(lora, plan, modules)
		record = report.to_record()
		if (options['ref_rank'] is None) != (options['ref_lr'] is None):
			raise PolicyError('--ref-rank and --ref-lr go together')
		if options['ref_rank'] is not None:
			record['max_stable_lr'] = max_stable_lr(lora.rank, options['ref_rank'], options['ref_lr'])
			if plan.main_lr > record['max_stable_lr']:
				logger.warning(
					'main LR %.2e is above the stable LR %.2e for rank %d', plan.main_lr, record['max_stable_lr'], lora.rank)
		if options['json']:
			self.stdout.write(render_line(record), ending='')
		else:
			self.stdout.write(report.table())

	def run_grid(self, options):
		axes = dict(parse_axis(text) for text in options['grid'])
		rules = [parse_rule(text) for text in options['exclude']]
		configs = factorial_grid(axes, rules)
		for config in configs:
			self.stdout.write(render_line(config), ending='')
		logger.info('%d configurations', len(configs))
		if options['hours_per_run'] is not None:
			logger.info('estimated sweep cost %.2f GPU-hours', sweep_cost(len(configs), options['hours_per_run']))
