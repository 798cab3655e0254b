import json
from collections import defaultdict

import numpy as np
import pandas as pd

from CPTFORGE.exceptions import PolicyError, RecordError
from CPTFORGE.management.base import ForgeCommand
from CPTFORGE.metrics import (
	accuracy_matrix, bleu4, category_reports, comparison_table, overall_report, winner_table, wins_by_model,
)
from CPTFORGE.records import load_json, read_records
from CPTFORGE.serializers import GenPairSerializer, TokenRecordSerializer


def frame_records(frame):
	"""DataFrame rows as plain dicts, missing cells as None."""
	return frame.astype(object).where(frame.notna(), None).to_dict('records')


class Command(ForgeCommand):
	help = 'Scores evaluation records: perplexity and top-k (tokens), accuracy and BLEU-4 (gen), winners'

	def add_command_arguments(self, parser):
		parser.add_argument('mode', choices=['tokens', 'gen', 'winners'])
		parser.add_argument('--base', default=None, help='base-model TokenRecord file to compare against')
		parser.add_argument('--weighting', choices=['arithmetic', 'pooled'], default='arithmetic')
		parser.add_argument('--smoothing', action='store_true', help='add-one smoothed BLEU-4')
		parser.add_argument('--json', action='store_true', help='write machine records instead of the table')

	def run(self, config, **options):
		handler = getattr(self, 'run_{}'.format(options['mode']))
		rows, table = handler(config, options)
		if options['json']:
			with self.sink(config, options) as sink:
				sink.write_all(rows)
		else:
			self.stdout.write(table)

	def run_tokens(self, config, options):
		stdin = self.stdin(options)
		reports = category_reports(read_records(TokenRecordSerializer, options['input'], stdin), config.worker_count)
		mode = options['weighting']
		if options['base']:
			base = category_reports(read_records(TokenRecordSerializer, options['base']), config.worker_count)
			frame = comparison_table(base, reports, mode)
			return frame_records(frame), frame.to_string(index=False)
		rows = [report.to_record() for report in reports]
		rows.append(overall_report(reports, mode))
		return rows, pd.DataFrame(rows).to_string(index=False)

	def run_gen(self, config, options):
		pairs = list(read_records(GenPairSerializer, options['input'], self.stdin(options)))
		matrix = accuracy_matrix(pairs)
		bleu = defaultdict(list)
		for pair in pairs:
			score = bleu4(pair.generated_tokens, pair.reference_tokens, options['smoothing']) if pair.generated_tokens else 0.0
			bleu[(pair.model or 'model', pair.category)].append(score)
		rows = [{
			'model': model,
			'category': category,
			'accuracy': accuracy,
			'bleu4': float(np.mean(bleu[(model, category)])),
			'pairs': len(bleu[(model, category)]),
		} for model, by_category in matrix.items() for category, accuracy in by_category.items()]
		if len(matrix) < 2:
			return rows, pd.DataFrame(rows).to_string(index=False)
		return rows, self._winner_text(winner_table(matrix))

	def run_winners(self, config, options):
		if options['input'] in (None, '-'):
			try:
				matrix = json.load(self.stdin(options))
			except ValueError as exc:
				raise RecordError(getattr(exc, 'lineno', 1), 'invalid JSON ({})'.format(exc))
		else:
			matrix = load_json(options['input'])
		if not isinstance(matrix, dict) or not all(isinstance(scores, dict) for scores in matrix.values()):
			raise PolicyError('expected a JSON object of model -> category -> accuracy')
		table = winner_table(matrix)
		rows = [dict(category=category, winner=list(row['Winner']), **{
			model: float(row[model]) for model in matrix
		}) for category, row in table.iterrows()]
		return rows, self._winner_text(table)

	def _winner_text(self, table):
		shown = table.copy()
		shown['Winner'] = [' / '.join(winners) for winners in shown['Winner']]
		wins = wins_by_model(table)
		summary = ', '.join('{} {}'.format(model, wins[model]) for model in table.columns if model != 'Winner')
		return '{}\n\nCategories won: {}'.format(shown.to_string(), summary)
