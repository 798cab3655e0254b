"""
The `forge` entry point: one subcommand per pipeline stage, each a Django
management command, with outcomes mapped onto exit codes.
"""
import os
import sys

SUBCOMMANDS = ('ingest', 'split', 'clean', 'pack', 'stats', 'plan', 'monitor', 'eval', 'sweep')

USAGE = 'usage: forge <{}> [options]\n'.format('|'.join(SUBCOMMANDS))


def run_subcommand(argv, stdout=None, stderr=None, stdin=None):
	"""
	Runs one subcommand
	input argv: [subcommand, arg, ...]
	return: exit code; 0 success, 1 usage, 2 data error, 3 emergency save
	"""
	from django.core.management import call_command
	from django.core.management.base import CommandError

	stdout = stdout or sys.stdout
	stderr = stderr or sys.stderr
	if not argv or argv[0] not in SUBCOMMANDS:
		if argv:
			stderr.write('forge: unknown subcommand {!r}\n'.format(argv[0]))
		stderr.write(USAGE)
		return 1
	options = {'stdout': stdout, 'stderr': stderr}
	if stdin is not None:
		options['stdin'] = stdin
	try:
		call_command(argv[0], *argv[1:], **options)
	except CommandError as exc:
		stderr.write('forge {}: {}\n'.format(argv[0], exc))
		return exc.returncode
	return 0


def main(argv=None):
	os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'FORGE.settings')
	import django
	django.setup()
	sys.exit(run_subcommand(sys.argv[1:] if argv is None else argv))
