import math

from rest_framework import serializers

from CPTFORGE.assembly import AssemblyPolicy, DEFAULT_BOUNDARY_CHARS, DEFAULT_EOT
from CPTFORGE.chunking import SplitPolicy
from CPTFORGE.exceptions import PolicyError
from CPTFORGE.ingest import GENERAL, Sample
from CPTFORGE.metrics import GenPair, TokenRecord
from CPTFORGE.monitor import MonitorConfig, RunEvent
from CPTFORGE.quality import CleanPolicy, DEFAULT_CODE_INDICATORS
from CPTFORGE.sweep import SweepRun


class LossField(serializers.Field):
	"""A float that may also be NaN or +/-Infinity, as training logs write them."""

	default_error_messages = {'invalid': 'A number, NaN or Infinity is required.'}

	def to_internal_value(self, data):
		if isinstance(data, bool):
			self.fail('invalid')
		try:
			return float(data)
		except (TypeError, ValueError):
			self.fail('invalid')

	def to_representation(self, value):
		return value


class TokenField(serializers.CharField):
	"""Tokens are compared as strings so 7 and "7" are the same token."""

	def __init__(self, **kwargs):
		kwargs.setdefault('trim_whitespace', False)
		kwargs.setdefault('allow_blank', True)
		super().__init__(**kwargs)


class StrictSerializer(serializers.Serializer):
	"""Rejects keys it has no field for, for hand-written policy and config documents."""

	def to_internal_value(self, data):
		if isinstance(data, dict):
			unknown = sorted(set(data) - set(self.fields))
			if unknown:
				raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
		return super().to_internal_value(data)

	def create(self, validated_data):
		try:
			return self.Meta.target(**validated_data)
		except PolicyError as exc:
			raise serializers.ValidationError(str(exc))


class SampleSerializer(serializers.Serializer):
	sample_idx = serializers.IntegerField(min_value=0)
	text = serializers.CharField(trim_whitespace=False, allow_blank=True)
	category = serializers.CharField(default=GENERAL)
	source_file = serializers.CharField(allow_null=True, required=False, default=None, trim_whitespace=False)
	origin_path = serializers.CharField(allow_blank=True, required=False, default='', trim_whitespace=False)
	token_count = serializers.IntegerField(min_value=0, allow_null=True, required=False, default=None)

	def create(self, validated_data):
		return Sample(**validated_data)

	def to_representation(self, instance):
		return instance.to_record()


class RunEventSerializer(serializers.Serializer):
	# logged metric name -> field name
	ALIASES = {
		'train/loss': 'loss',
		'train/grad_norm_post_clip': 'grad_norm_post_clip',
		'train/step_time_sec': 'step_time_sec',
		'train/learning_rate': 'learning_rate',
		'train/tokens': 'tokens',
		'train/global_step': 'step',
	}

	step = serializers.IntegerField(min_value=0)
	loss = LossField()
	grad_norm_post_clip = LossField(allow_null=True, required=False, default=None)
	step_time_sec = serializers.FloatField()
	tokens = serializers.IntegerField(min_value=0, default=0)
	learning_rate = serializers.FloatField(allow_null=True, required=False, default=None)
	batch_preview = serializers.CharField(allow_null=True, required=False, default=None, trim_whitespace=False)

	def to_internal_value(self, data):
		if isinstance(data, dict):
			data = {self.ALIASES.get(key, key): value for key, value in data.items()}
		return super().to_internal_value(data)

	def validate_step_time_sec(self, value):
		if not value > 0:
			raise serializers.ValidationError('step_time_sec must be positive.')
		return value

	def validate_grad_norm_post_clip(self, value):
		if value is not None and value < 0:
			raise serializers.ValidationError('Gradient norms are nonnegative.')
		return value

	def create(self, validated_data):
		return RunEvent(
			step=validated_data['step'],
			loss=validated_data['loss'],
			step_time_s=validated_data['step_time_sec'],
			tokens_in_step=validated_data['tokens'],
			grad_norm_post_clip=validated_data['grad_norm_post_clip'],
			learning_rate=validated_data['learning_rate'],
			batch_preview=validated_data['batch_preview'],
		)


class TokenRecordSerializer(serializers.Serializer):
	sample_id = serializers.CharField()
	position = serializers.IntegerField(min_value=0)
	ref_token_id = serializers.IntegerField()
	logprob_of_ref = serializers.FloatField(max_value=0)
	topk_ids = serializers.ListField(child=serializers.IntegerField(), min_length=5)
	category = serializers.CharField(default=GENERAL)

	def validate_logprob_of_ref(self, value):
		if not math.isfinite(value):
			raise serializers.ValidationError('logprob_of_ref must be finite.')
		return value

	def validate_topk_ids(self, value):
		if len(set(value)) != len(value):
			raise serializers.ValidationError('topk_ids has duplicates.')
		return tuple(value)

	def create(self, validated_data):
		return TokenRecord(**validated_data)


class GenPairSerializer(serializers.Serializer):
	sample_id = serializers.CharField()
	category = serializers.CharField(default=GENERAL)
	model = serializers.CharField(allow_null=True, required=False, default=None)
	reference_tokens = serializers.ListField(child=TokenField(), min_length=1)
	generated_tokens = serializers.ListField(child=TokenField(), allow_empty=True)

	def create(self, validated_data):
		validated_data['reference_tokens'] = tuple(validated_data['reference_tokens'])
		validated_data['generated_tokens'] = tuple(validated_data['generated_tokens'])
		return GenPair(**validated_data)


class SweepRunSerializer(serializers.Serializer):
	name = serializers.CharField()
	config = serializers.DictField(child=serializers.JSONField(), default=dict)
	init_loss = serializers.FloatField(allow_null=True, required=False, default=None)
	final_loss = serializers.FloatField(allow_null=True, required=False, default=None)
	min_loss = serializers.FloatField(allow_null=True, required=False, default=None)
	peak_grad = serializers.FloatField(allow_null=True, required=False, default=None, min_value=0)
	mean_grad = serializers.FloatField(allow_null=True, required=False, default=None, min_value=0)

	def validate(self, data):
		low = data.get('min_loss')
		if low is not None:
			for key in ('init_loss', 'final_loss'):
				if data.get(key) is not None and low > data[key]:
					raise serializers.ValidationError('min_loss is above {}.'.format(key))
		return data

	def create(self, validated_data):
		return SweepRun(**validated_data)


class CleanPolicySerializer(StrictSerializer):
	separator_min_run = serializers.IntegerField(min_value=1, default=10)
	separator_chars = serializers.CharField(trim_whitespace=False, default='-=*_')
	repeat_min_run = serializers.IntegerField(min_value=1, default=10)
	repeat_reduce_to = serializers.IntegerField(min_value=1, default=3)
	tab_width = serializers.IntegerField(min_value=1, default=4)
	garbage_reject_threshold = serializers.FloatField(min_value=0, max_value=1, default=0.70)
	min_nl_words = serializers.IntegerField(min_value=1, default=20)
	code_indicators = serializers.ListField(child=serializers.CharField(), default=list(DEFAULT_CODE_INDICATORS))

	class Meta:
		target = CleanPolicy

	def validate(self, data):
		if data['repeat_reduce_to'] >= data['repeat_min_run']:
			raise serializers.ValidationError('repeat_reduce_to must be below repeat_min_run.')
		return data


class SplitPolicySerializer(StrictSerializer):
	max_chars = serializers.IntegerField(min_value=1, default=7500)
	min_chars = serializers.IntegerField(min_value=1, default=50)
	hierarchy = serializers.ListField(
		child=serializers.ChoiceField(choices=['file_marker', 'function', 'statement']),
		default=['file_marker', 'function', 'statement'])
	marker_prefix = serializers.CharField(trim_whitespace=False, default='// File:')

	class Meta:
		target = SplitPolicy

	def validate(self, data):
		if data['min_chars'] >= data['max_chars']:
			raise serializers.ValidationError('min_chars must be below max_chars.')
		return data


class TokenCounterSerializer(StrictSerializer):
	strategy = serializers.ChoiceField(choices=['char', 'whitespace', 'external'], default='char')
	chars_per_token = serializers.CharField(default='4.0')
	count_file = serializers.CharField(allow_null=True, required=False, default=None)

	def validate_chars_per_token(self, value):
		try:
			if not float(value) > 0:
				raise ValueError
		except ValueError:
			raise serializers.ValidationError('chars_per_token must be a positive number.')
		return value

	def to_internal_value(self, data):
		if isinstance(data, dict) and isinstance(data.get('chars_per_token'), (int, float)):
			data = dict(data, chars_per_token=str(data['chars_per_token']))
		return super().to_internal_value(data)

	def create(self, validated_data):
		return validated_data


class AssemblyPolicySerializer(StrictSerializer):
	max_tokens = serializers.IntegerField(min_value=1, default=2048)
	eot_token = serializers.CharField(trim_whitespace=False, default=DEFAULT_EOT)
	boundary_chars = serializers.ListField(
		child=serializers.CharField(trim_whitespace=False, min_length=1, max_length=1),
		default=list(DEFAULT_BOUNDARY_CHARS))

	def create(self, validated_data):
		counter = self.context.get('counter')
		if counter is not None:
			validated_data['counter'] = counter
		try:
			return AssemblyPolicy(**validated_data)
		except PolicyError as exc:
			raise serializers.ValidationError(str(exc))


class IngestOptionsSerializer(StrictSerializer):
	delimiter_char = serializers.CharField(trim_whitespace=False, min_length=1, max_length=1, default='=')
	delimiter_len = serializers.IntegerField(min_value=1, default=82)
	marker_prefix = serializers.CharField(trim_whitespace=False, default='// File:')
	retain_marker = serializers.BooleanField(default=True)
	manifest = serializers.CharField(allow_null=True, required=False, default=None)

	def create(self, validated_data):
		return validated_data


class MonitorConfigSerializer(StrictSerializer):
	loss_window = serializers.IntegerField(min_value=1, default=20)
	grad_window = serializers.IntegerField(min_value=1, default=20)
	throughput_window = serializers.IntegerField(min_value=1, default=20)
	loss_spike_factor = serializers.FloatField(min_value=0, default=1.5)
	grad_spike_factor = serializers.FloatField(min_value=0, default=2.0)
	emergency_nan_run = serializers.IntegerField(min_value=1, default=3)
	summary_anchor_step = serializers.IntegerField(min_value=0, default=10)

	class Meta:
		target = MonitorConfig
