"""
Order-preserving fan-out for per-record stages (ingest, split, clean).
"""
from multiprocessing import Pool

from CPTFORGE.exceptions import PolicyError


def map_ordered(func, items, workers=1, chunksize=64):
	"""
	Applies func to every item, results in input order
	input func: picklable module-level callable (or functools.partial of one)
	input items: iterable of arguments
	input workers: process count, 1 runs inline
	return: list of results
	"""
	if workers < 1:
		raise PolicyError('worker_count must be at least 1, got {}'.format(workers))
	if workers == 1:
		return [func(item) for item in items]
	with Pool(processes=workers) as pool:
		return list(pool.imap(func, items, chunksize=chunksize))
