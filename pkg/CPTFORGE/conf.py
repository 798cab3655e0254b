"""
Resolves the PipelineConfig every subcommand runs with: settings.FORGE
defaults, then the FORGE_CONFIG JSON document, then command-line flags.
"""
import copy
import json
import logging
from dataclasses import dataclass

from django.conf import settings
from rest_framework import serializers

from CPTFORGE.assembly import AssemblyPolicy
from CPTFORGE.chunking import SplitPolicy
from CPTFORGE.exceptions import PolicyError
from CPTFORGE.monitor import MonitorConfig
from CPTFORGE.quality import CleanPolicy
from CPTFORGE.serializers import (
	AssemblyPolicySerializer, CleanPolicySerializer, IngestOptionsSerializer,
	MonitorConfigSerializer, SplitPolicySerializer, TokenCounterSerializer,
)
from CPTFORGE.tokencount import TokenCounter, counter_from_settings

logger = logging.getLogger(__name__)

SCALAR_KEYS = ('INPUT_ROOT', 'OUTPUT_ROOT', 'CACHE_DIR', 'WORKER_COUNT', 'SHARD_SIZE_RECORDS')
SECTION_SERIALIZERS = {
	'TOKEN_COUNTER': TokenCounterSerializer,
	'INGEST': IngestOptionsSerializer,
	'SPLIT_POLICY': SplitPolicySerializer,
	'CLEAN_POLICY': CleanPolicySerializer,
	'ASSEMBLY_POLICY': AssemblyPolicySerializer,
	'MONITOR': MonitorConfigSerializer,
}


@dataclass(frozen=True)
class PipelineConfig:
	input_root: str
	output_root: str
	cache_dir: str
	worker_count: int
	shard_size_records: int
	token_counter: TokenCounter
	ingest: dict
	split_policy: SplitPolicy
	clean_policy: CleanPolicy
	assembly_policy: AssemblyPolicy
	monitor: MonitorConfig


def deep_merge(base, overlay):
	"""Returns base with overlay merged in; nested dicts merge, everything else replaces."""
	merged = copy.deepcopy(base)
	for key, value in overlay.items():
		if isinstance(value, dict) and isinstance(merged.get(key), dict):
			merged[key] = deep_merge(merged[key], value)
		else:
			merged[key] = copy.deepcopy(value)
	return merged


def _read_config_file(path):
	try:
		with open(path, encoding='utf-8') as handle:
			document = json.load(handle)
	except OSError as exc:
		raise PolicyError('cannot read FORGE_CONFIG {}: {}'.format(path, exc))
	except ValueError as exc:
		raise PolicyError('FORGE_CONFIG {} is not valid JSON: {}'.format(path, exc))
	if not isinstance(document, dict):
		raise PolicyError('FORGE_CONFIG {} must hold a JSON object'.format(path))
	return document


def _validated(name, section, context=None):
	serializer = SECTION_SERIALIZERS[name](data=section, context=context or {})
	if not serializer.is_valid():
		raise PolicyError('{}: {}'.format(name, json.dumps(serializer.errors, sort_keys=True)))
	try:
		return serializer.save()
	except (serializers.ValidationError, PolicyError) as exc:
		raise PolicyError('{}: {}'.format(name, exc))


def resolved_settings(overrides=None, config_path=None):
	"""The merged FORGE dict before validation."""
	merged = copy.deepcopy(settings.FORGE)
	config_path = config_path or getattr(settings, 'FORGE_CONFIG', None)
	if config_path:
		document = _read_config_file(config_path)
		unknown = sorted(set(document) - set(SCALAR_KEYS) - set(SECTION_SERIALIZERS))
		if unknown:
			raise PolicyError('unknown FORGE_CONFIG keys: {}'.format(', '.join(unknown)))
		merged = deep_merge(merged, document)
		logger.debug('merged FORGE_CONFIG %s', config_path)
	if overrides:
		merged = deep_merge(merged, overrides)
	return merged


def load_pipeline_config(overrides=None, config_path=None):
	"""
	Builds the PipelineConfig for one invocation
	input overrides: dict in the FORGE shape holding only what the flags set
	input config_path: JSON document to merge; settings.FORGE_CONFIG when omitted
	return: PipelineConfig; any bad value raises PolicyError
	"""
	merged = resolved_settings(overrides, config_path)
	for key in ('WORKER_COUNT', 'SHARD_SIZE_RECORDS'):
		if not isinstance(merged.get(key), int) or merged[key] < 1:
			raise PolicyError('{} must be a positive integer'.format(key))
	counter_section = _validated('TOKEN_COUNTER', merged.get('TOKEN_COUNTER', {}))
	counter = counter_from_settings(counter_section)
	return PipelineConfig(
		input_root=merged['INPUT_ROOT'],
		output_root=merged['OUTPUT_ROOT'],
		cache_dir=merged['CACHE_DIR'],
		worker_count=merged['WORKER_COUNT'],
		shard_size_records=merged['SHARD_SIZE_RECORDS'],
		token_counter=counter,
		ingest=_validated('INGEST', merged.get('INGEST', {})),
		split_policy=_validated('SPLIT_POLICY', merged.get('SPLIT_POLICY', {})),
		clean_policy=_validated('CLEAN_POLICY', merged.get('CLEAN_POLICY', {})),
		assembly_policy=_validated('ASSEMBLY_POLICY', merged.get('ASSEMBLY_POLICY', {}), {'counter': counter}),
		monitor=_validated('MONITOR', merged.get('MONITOR', {})),
	)


def load_policy(serializer_class, path):
	"""A stand-alone policy document such as the --policy file of clean."""
	document = _read_config_file(path)
	serializer = serializer_class(data=document)
	if not serializer.is_valid():
		raise PolicyError('{}: {}'.format(path, json.dumps(serializer.errors, sort_keys=True)))
	try:
		return serializer.save()
	except serializers.ValidationError as exc:
		raise PolicyError('{}: {}'.format(path, exc))
