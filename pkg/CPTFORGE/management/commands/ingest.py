import os

from CPTFORGE.ingest import (
	await_done_marker, ingest_tree, load_manifest, repair_order, verify_order, write_done_marker,
)
from CPTFORGE.management.base import ForgeCommand


class Command(ForgeCommand):
	help = 'Walks a raw corpus tree and emits one Sample record per file unit'
	record_input = False

	def add_command_arguments(self, parser):
		parser.add_argument('root', nargs='?', default=None, help='corpus root; INPUT_ROOT when omitted')
		parser.add_argument('--manifest', default=None, help='path<TAB>category sidecar')
		parser.add_argument('--marker-prefix', default=None)
		parser.add_argument('--drop-marker', action='store_true', help='leave the file marker line out of unit bodies')
		parser.add_argument('--await-done', action='store_true', help='wait for a .done marker in the root first')
		parser.add_argument('--poll-interval', type=float, default=5)

	def overrides(self, options):
		return {'INGEST': {
			'manifest': options['manifest'],
			'marker_prefix': options['marker_prefix'],
			'retain_marker': False if options['drop_marker'] else None,
		}}

	def run(self, config, **options):
		root = options['root'] or config.input_root
		ingest = config.ingest
		if options['await_done']:
			await_done_marker(root, poll_interval_s=options['poll_interval'])
		manifest = load_manifest(ingest['manifest']) if ingest['manifest'] else None
		samples = ingest_tree(
			root, manifest, workers=config.worker_count,
			delimiter_char=ingest['delimiter_char'],
			delimiter_len=ingest['delimiter_len'],
			marker_prefix=ingest['marker_prefix'],
			retain_marker=ingest['retain_marker'],
		)
		if samples and not verify_order(samples).ok:
			samples = repair_order(samples)
		with self.sink(config, options) as sink:
			sink.write_all(sample.to_record() for sample in samples)
		if options.get('output_dir'):
			os.makedirs(options['output_dir'], exist_ok=True)
			write_done_marker(options['output_dir'])
