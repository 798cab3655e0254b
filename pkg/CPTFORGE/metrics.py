"""
Evaluation metrics over model-output records. Nothing here runs a model:
TokenRecord and GenPair files come from whatever inference stack produced
them.
"""
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import pandas as pd

from CPTFORGE.exceptions import EmptyEval, MissingCategory, PolicyError, TooShort

logger = logging.getLogger(__name__)

GENERAL = 'general'
BLEU_ORDER = 4


@dataclass(frozen=True)
class TokenRecord:
	sample_id: str
	position: int
	ref_token_id: int
	logprob_of_ref: float
	topk_ids: tuple
	category: str = GENERAL


@dataclass(frozen=True)
class CategoryReport:
	category: str
	token_count: int
	ppl: float
	top1: float
	top5: float
	mean_loss: float

	def to_record(self):
		return {
			'category': self.category,
			'token_count': self.token_count,
			'ppl': self.ppl,
			'top1': self.top1,
			'top5': self.top5,
			'mean_loss': self.mean_loss,
		}


@dataclass(frozen=True)
class GenPair:
	sample_id: str
	reference_tokens: tuple
	generated_tokens: tuple
	category: str = GENERAL
	model: Optional[str] = None


def _logprobs(records):
	values = np.array([record.logprob_of_ref for record in records], dtype=np.float64)
	if not values.size:
		raise EmptyEval('no token records to evaluate')
	return values


def mean_loss(records):
	"""Mean negative log-probability of the reference tokens."""
	return float(-np.mean(_logprobs(records)))


def perplexity(records):
	"""
	exp of the mean negative log-probability; works on the mean of logs, never on products
	input records: iterable of TokenRecord
	return: float >= 1 for valid log-probabilities
	"""
	return math.exp(mean_loss(records))


def weighted_ppl(per_category, mode='arithmetic'):
	"""
	Overall perplexity from per-category figures
	input per_category: list of (ppl, token_count)
	input mode: 'arithmetic' is the token-weighted mean of the perplexities,
		'pooled' is exp of the token-weighted mean loss
	return: float
	"""
	if not per_category:
		raise EmptyEval('no categories to weight')
	ppl = np.array([value for value, _ in per_category], dtype=np.float64)
	weights = np.array([count for _, count in per_category], dtype=np.float64)
	if (weights <= 0).any():
		raise PolicyError('token counts must be positive')
	if mode == 'arithmetic':
		return float(np.average(ppl, weights=weights))
	if mode == 'pooled':
		return float(np.exp(np.average(np.log(ppl), weights=weights)))
	raise PolicyError('unknown weighting mode {!r}'.format(mode))


def delta_ppl(base, adapted):
	if not base > 0:
		raise PolicyError('base perplexity must be positive')
	return (base - adapted) / base * 100


def split_teacher_forced(sample_tokens, frac=0.75):
	"""
	Splits a token sequence into the supplied prefix and the suffix to predict
	input sample_tokens: list of tokens, at least two
	input frac: prefix share, floor applied
	return: (prefix, suffix), both non-empty
	"""
	n = len(sample_tokens)
	if n < 2:
		raise TooShort('need at least 2 tokens to split, got {}'.format(n))
	if not 0 < frac < 1:
		raise PolicyError('frac must be in (0, 1)')
	cut = math.floor(Fraction(str(frac)) * n)
	cut = min(max(cut, 1), n - 1)
	return list(sample_tokens[:cut]), list(sample_tokens[cut:])


def topk_accuracy(records, k):
	records = list(records)
	if not records:
		raise EmptyEval('no token records to evaluate')
	if k < 1:
		raise PolicyError('k must be at least 1')
	hits = 0
	for record in records:
		if len(record.topk_ids) < k:
			raise PolicyError('record {}:{} has fewer than {} candidates'.format(record.sample_id, record.position, k))
		hits += record.ref_token_id in record.topk_ids[:k]
	return hits / len(records)


def category_report(category, records):
	loss = mean_loss(records)
	return CategoryReport(
		category=category,
		token_count=len(records),
		ppl=math.exp(loss),
		top1=topk_accuracy(records, 1),
		top5=topk_accuracy(records, 5),
		mean_loss=loss,
	)


def category_reports(records, workers=1):
	"""
	Per-category reports, categories evaluated concurrently and returned sorted by name
	input records: iterable of TokenRecord
	input workers: thread count
	return: list of CategoryReport
	"""
	grouped = defaultdict(list)
	for record in records:
		grouped[record.category].append(record)
	if not grouped:
		raise EmptyEval('no token records to evaluate')
	names = sorted(grouped)
	with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
		reports = list(pool.map(lambda name: category_report(name, grouped[name]), names))
	logger.info('evaluated %d tokens across %d categories', sum(r.token_count for r in reports), len(reports))
	return reports


def overall_report(reports, mode='arithmetic'):
	return {
		'category': 'overall',
		'token_count': sum(report.token_count for report in reports),
		'ppl': weighted_ppl([(report.ppl, report.token_count) for report in reports], mode),
		'weighting': mode,
	}


def comparison_table(base_reports, adapted_reports, mode='arithmetic'):
	"""
	Base against adapted, per category, in the layout of the perplexity and completion tables
	return: pandas DataFrame with an overall row last
	"""
	base = {report.category: report for report in base_reports}
	rows = []
	for report in adapted_reports:
		if report.category not in base:
			raise MissingCategory('base', [report.category])
		before = base[report.category]
		rows.append({
			'Category': report.category,
			'Base PPL': before.ppl,
			'Adapted PPL': report.ppl,
			'Improvement %': delta_ppl(before.ppl, report.ppl),
			'Base Top-1': before.top1,
			'Adapted Top-1': report.top1,
			'Adapted Top-5': report.top5,
			'Top-1 gain (pp)': top1_gain_pp(before.top1, report.top1),
		})
	frame = pd.DataFrame(rows)
	overall_base = weighted_ppl([(base[r.category].ppl, base[r.category].token_count) for r in adapted_reports], mode)
	overall_adapted = weighted_ppl([(r.ppl, r.token_count) for r in adapted_reports], mode)
	overall = pd.DataFrame([{
		'Category': 'Overall (weighted)',
		'Base PPL': overall_base,
		'Adapted PPL': overall_adapted,
		'Improvement %': delta_ppl(overall_base, overall_adapted),
	}])
	return pd.concat([frame, overall], ignore_index=True)


def top1_gain_pp(base_top1, adapted_top1):
	return (adapted_top1 - base_top1) * 100


def _ngrams(tokens, n):
	return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate_tokens, reference_tokens, smoothing=False):
	"""
	BLEU-4 of one candidate against one reference
	input candidate_tokens: non-empty token list
	input reference_tokens: non-empty token list
	input smoothing: add-one smoothing of every precision; off by default, where
		any zero precision makes the score 0
	return: float in [0, 1]
	"""
	if not candidate_tokens or not reference_tokens:
		raise PolicyError('bleu4 needs non-empty candidate and reference')
	candidate, reference = list(candidate_tokens), list(reference_tokens)
	log_precision = 0.0
	for n in range(1, BLEU_ORDER + 1):
		cand_counts = _ngrams(candidate, n)
		ref_counts = _ngrams(reference, n)
		clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
		total = max(len(candidate) - n + 1, 0)
		if not total and len(reference) < n:
			# neither side is long enough for this order
			continue
		if smoothing:
			precision = (clipped + 1) / (total + 1)
		elif clipped == 0:
			return 0.0
		else:
			precision = clipped / total
		log_precision += math.log(precision) / BLEU_ORDER
	c, r = len(candidate), len(reference)
	brevity = 1.0 if c >= r else math.exp(1 - r / c)
	return brevity * math.exp(log_precision)


def gen_token_accuracy(pair):
	"""Position-aligned exact matches divided by the reference length."""
	reference, generated = pair.reference_tokens, pair.generated_tokens
	if not reference:
		raise PolicyError('sample {} has an empty reference'.format(pair.sample_id))
	matches = sum(1 for ref, gen in zip(reference, generated) if ref == gen)
	return matches / len(reference)


def accuracy_matrix(pairs):
	"""Mean generative accuracy per (model, category) from a GenPair stream."""
	scores = defaultdict(lambda: defaultdict(list))
	for pair in pairs:
		scores[pair.model or 'model'][pair.category].append(gen_token_accuracy(pair))
	if not scores:
		raise EmptyEval('no generation pairs to evaluate')
	return {model: {cat: float(np.mean(values)) for cat, values in by_cat.items()} for model, by_cat in scores.items()}


def winner_table(scores):
	"""
	Best model per category, exact ties reported as joint winners
	input scores: dict model -> dict category -> accuracy
	return: pandas DataFrame, one row per category in the first model's order,
		columns for every model plus 'Winner' (tuple of model names)
	"""
	if not scores:
		raise EmptyEval('no models to compare')
	models = list(scores)
	categories = list(dict.fromkeys(cat for model in models for cat in scores[model]))
	for model in models:
		missing = set(categories) - set(scores[model])
		if missing:
			raise MissingCategory(model, missing)
	frame = pd.DataFrame({model: [scores[model][cat] for cat in categories] for model in models}, index=categories)
	best = frame.max(axis=1)
	is_best = frame.eq(best, axis=0)
	frame['Winner'] = [tuple(model for model in models if is_best.at[cat, model]) for cat in categories]
	return frame


def wins_by_model(table):
	"""Categories won per model; joint winners each get the credit."""
	wins = Counter()
	for winners in table['Winner']:
		wins.update(winners)
	return wins
