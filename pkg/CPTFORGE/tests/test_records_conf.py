import io
import json
import math
import os
import tempfile

import numpy as np
from django.test import SimpleTestCase

from CPTFORGE.conf import deep_merge, load_pipeline_config, load_policy, resolved_settings
from CPTFORGE.exceptions import PolicyError, RecordError
from CPTFORGE.ingest import Sample
from CPTFORGE.monitor import RunEvent
from CPTFORGE.quality import CleanPolicy
from CPTFORGE.records import RecordSink, iter_lines, parse_line, read_records, render_line
from CPTFORGE.serializers import (
	CleanPolicySerializer, RunEventSerializer, SampleSerializer, SplitPolicySerializer, TokenRecordSerializer,
)

'''
Fixed Test Cases Index

	#Record Writing Test
		#Test Case W1 - Seven records in shards of three give three part files
		#Test Case W2 - NaN and Infinity are written bare

	#Record Reading Test
		#Test Case L1 - Line numbers run on across shards
		#Test Case L2 - Blank lines are skipped, numbering is kept
		#Test Case L3 - Invalid JSON, a JSON array, a failed field
		#Test Case L4 - Bytes that are not UTF-8 give the shard and line

	#Serializer Test
		#Test Case Z1 - Logged metric names map onto RunEvent fields
		#Test Case Z2 - topk_ids needs five distinct ids
		#Test Case Z3 - Policy documents reject unknown keys

	#Config Test
		#Test Case F1 - Nested sections merge, scalars replace
		#Test Case F2 - Defaults, config file, then flags
		#Test Case F3 - Unknown keys and bad values

	#Property Test
		#Test Case R1 - Shards concatenated equal the single-stream output
'''


def _sample(i, text='int x;\n'):
	return Sample(sample_idx=i, text=text).to_record()


def _write_config(directory, document):
	path = os.path.join(directory, 'forge.json')
	with open(path, 'w', encoding='utf-8') as handle:
		json.dump(document, handle)
	return path


class Records_Tests(SimpleTestCase):

	#Test Case W1 - Seven records in shards of three give three part files
	def test_record_sink_case_W1(self):
		with tempfile.TemporaryDirectory() as tmp:
			with self.assertLogs('CPTFORGE.records', level='INFO'):
				with RecordSink(output_dir=tmp, shard_size=3) as sink:
					sink.write_all(_sample(i) for i in range(7))
			self.assertEqual(sorted(os.listdir(tmp)), ['part-00000.jsonl', 'part-00001.jsonl', 'part-00002.jsonl'])
			with open(os.path.join(tmp, 'part-00002.jsonl'), encoding='utf-8') as handle:
				self.assertEqual(len(handle.readlines()), 1)
			self.assertEqual(sink.count, 7)
		with self.assertRaises(PolicyError):
			RecordSink()
		with self.assertRaises(PolicyError):
			RecordSink(stream=io.StringIO(), shard_size=0)

	#Test Case W2 - NaN and Infinity are written bare
	def test_render_line_case_W2(self):
		self.assertEqual(render_line({'loss': float('nan')}), '{"loss":NaN}\n')
		self.assertEqual(render_line({'loss': float('inf')}), '{"loss":Infinity}\n')
		self.assertEqual(render_line({'text': 'é'}), '{"text":"é"}\n')

	#Test Case L1 - Line numbers run on across shards
	def test_read_records_case_L1(self):
		with tempfile.TemporaryDirectory() as tmp:
			with self.assertLogs('CPTFORGE.records', level='INFO'):
				with RecordSink(output_dir=tmp, shard_size=2) as sink:
					sink.write_all(_sample(i) for i in range(5))
			self.assertEqual([n for n, _ in iter_lines(tmp)], [1, 2, 3, 4, 5])
			with open(os.path.join(tmp, 'part-00001.jsonl'), 'a', encoding='utf-8') as handle:
				handle.write('{"sample_idx": -1, "text": "x"}\n')
			with self.assertRaises(RecordError) as ctx:
				list(read_records(SampleSerializer, tmp))
			self.assertEqual(ctx.exception.line_no, 5)
			self.assertIn('sample_idx', str(ctx.exception))
		with tempfile.TemporaryDirectory() as empty:
			with self.assertRaises(PolicyError):
				list(iter_lines(empty))

	#Test Case L2 - Blank lines are skipped, numbering is kept
	def test_read_records_case_L2(self):
		stdin = io.StringIO('{"sample_idx": 0, "text": "a"}\n\n   \n{"sample_idx": 1, "text": "b"}\n')
		samples = list(read_records(SampleSerializer, '-', stdin))
		self.assertEqual([s.text for s in samples], ['a', 'b'])
		self.assertEqual(samples[0].category, 'general')
		bad = io.StringIO('{"sample_idx": 0, "text": "a"}\n\n{"sample_idx": "x", "text": "b"}\n')
		with self.assertRaises(RecordError) as ctx:
			list(read_records(SampleSerializer, '-', bad))
		self.assertEqual(ctx.exception.line_no, 3)

	#Test Case L3 - Invalid JSON, a JSON array, a failed field
	def test_parse_line_case_L3(self):
		with self.assertRaises(RecordError) as ctx:
			parse_line(4, '{"sample_idx": ')
		self.assertEqual(ctx.exception.line_no, 4)
		with self.assertRaises(RecordError):
			parse_line(1, '[1, 2]')
		self.assertTrue(math.isnan(parse_line(1, '{"loss": NaN}')['loss']))

	#Test Case L4 - Bytes that are not UTF-8 give the shard and line
	def test_iter_lines_case_L4(self):
		with tempfile.TemporaryDirectory() as tmp:
			path = os.path.join(tmp, 'part-00000.jsonl')
			with open(path, 'wb') as handle:
				handle.write(b'{"sample_idx": 0, "text": "a"}\n{"sample_idx": 1, "text": "\xff"}\n')
			with self.assertRaises(RecordError) as ctx:
				list(read_records(SampleSerializer, tmp))
			self.assertEqual((ctx.exception.line_no, ctx.exception.path), (2, path))
			self.assertIn('not valid UTF-8', str(ctx.exception))
		stream = io.TextIOWrapper(io.BytesIO(b'{"sample_idx": 0, "text": "a"}\n\xc3(\n'), encoding='utf-8')
		with self.assertRaises(RecordError) as ctx:
			list(iter_lines('-', stream))
		self.assertEqual(ctx.exception.path, '<stdin>')

	#Test Case Z1 - Logged metric names map onto RunEvent fields
	def test_run_event_serializer_case_Z1(self):
		serializer = RunEventSerializer(data={
			'train/global_step': 12, 'train/loss': 'NaN', 'train/step_time_sec': 60.3,
			'train/tokens': 524288, 'train/grad_norm_post_clip': 3.9,
		})
		self.assertTrue(serializer.is_valid(), serializer.errors)
		event = serializer.save()
		self.assertIsInstance(event, RunEvent)
		self.assertEqual((event.step, event.tokens_in_step, event.step_time_s), (12, 524288, 60.3))
		self.assertNotEqual(event.loss, event.loss)
		self.assertFalse(RunEventSerializer(data={'step': 1, 'loss': 1.0, 'step_time_sec': 0}).is_valid())
		self.assertFalse(RunEventSerializer(data={'step': 1, 'loss': True, 'step_time_sec': 1}).is_valid())

	#Test Case Z2 - topk_ids needs five distinct ids
	def test_token_record_serializer_case_Z2(self):
		record = {'sample_id': 's', 'position': 0, 'ref_token_id': 7, 'logprob_of_ref': -0.5, 'topk_ids': [7, 1, 2, 3, 4]}
		serializer = TokenRecordSerializer(data=record)
		self.assertTrue(serializer.is_valid(), serializer.errors)
		self.assertEqual(serializer.save().topk_ids, (7, 1, 2, 3, 4))
		self.assertFalse(TokenRecordSerializer(data=dict(record, topk_ids=[7, 7, 2, 3, 4])).is_valid())
		self.assertFalse(TokenRecordSerializer(data=dict(record, topk_ids=[7, 1, 2, 3])).is_valid())
		self.assertFalse(TokenRecordSerializer(data=dict(record, logprob_of_ref=0.5)).is_valid())

	#Test Case Z3 - Policy documents reject unknown keys
	def test_strict_serializer_case_Z3(self):
		serializer = CleanPolicySerializer(data={'tab_width': 8, 'tabwidth': 8})
		self.assertFalse(serializer.is_valid())
		self.assertIn('tabwidth', serializer.errors)
		serializer = CleanPolicySerializer(data={'tab_width': 8})
		self.assertTrue(serializer.is_valid(), serializer.errors)
		self.assertEqual(serializer.save(), CleanPolicy(tab_width=8))
		self.assertFalse(SplitPolicySerializer(data={'max_chars': 50, 'min_chars': 50}).is_valid())
		with tempfile.TemporaryDirectory() as tmp:
			path = _write_config(tmp, {'repeat_min_run': 3, 'repeat_reduce_to': 3})
			with self.assertRaises(PolicyError):
				load_policy(CleanPolicySerializer, path)
			path = _write_config(tmp, {'min_nl_words': 5})
			self.assertEqual(load_policy(CleanPolicySerializer, path).min_nl_words, 5)


class Config_Tests(SimpleTestCase):

	#Test Case F1 - Nested sections merge, scalars replace
	def test_deep_merge_case_F1(self):
		base = {'A': 1, 'S': {'x': 1, 'y': [1, 2]}}
		merged = deep_merge(base, {'A': 2, 'S': {'y': [3]}, 'B': {'z': 0}})
		self.assertEqual(merged, {'A': 2, 'S': {'x': 1, 'y': [3]}, 'B': {'z': 0}})
		self.assertEqual(base, {'A': 1, 'S': {'x': 1, 'y': [1, 2]}})

	#Test Case F2 - Defaults, config file, then flags
	def test_load_pipeline_config_case_F2(self):
		config = load_pipeline_config(config_path='')
		self.assertEqual(config.assembly_policy.max_tokens, 2048)
		self.assertEqual(config.split_policy.max_chars, 7500)
		self.assertEqual(config.monitor.loss_window, 20)
		self.assertEqual(config.ingest['delimiter_len'], 82)
		with tempfile.TemporaryDirectory() as tmp:
			path = _write_config(tmp, {'WORKER_COUNT': 4, 'MONITOR': {'loss_window': 7}})
			config = load_pipeline_config(config_path=path)
			self.assertEqual((config.worker_count, config.monitor.loss_window), (4, 7))
			self.assertEqual(config.monitor.grad_window, 20)
			config = load_pipeline_config({'MONITOR': {'loss_window': 9}}, config_path=path)
			self.assertEqual((config.worker_count, config.monitor.loss_window), (4, 9))
			self.assertEqual(resolved_settings({'WORKER_COUNT': 2}, path)['WORKER_COUNT'], 2)

	#Test Case F3 - Unknown keys and bad values
	def test_load_pipeline_config_case_F3(self):
		with tempfile.TemporaryDirectory() as tmp:
			with self.assertRaises(PolicyError):
				load_pipeline_config(config_path=_write_config(tmp, {'WORKERS': 4}))
			with self.assertRaises(PolicyError):
				load_pipeline_config(config_path=_write_config(tmp, {'CLEAN_POLICY': {'bogus': 1}}))
			with self.assertRaises(PolicyError):
				load_pipeline_config(config_path=_write_config(tmp, [1, 2]))
			with self.assertRaises(PolicyError):
				load_pipeline_config(config_path=os.path.join(tmp, 'missing.json'))
		with self.assertRaises(PolicyError):
			load_pipeline_config({'WORKER_COUNT': 0}, config_path='')
		with self.assertRaises(PolicyError):
			load_pipeline_config({'CLEAN_POLICY': {'repeat_reduce_to': 12}}, config_path='')
		with self.assertRaises(PolicyError):
			load_pipeline_config({'TOKEN_COUNTER': {'strategy': 'external'}}, config_path='')
		with self.assertRaises(PolicyError):
			load_pipeline_config({'ASSEMBLY_POLICY': {'max_tokens': 0}}, config_path='')

	#Test Case R1 - Shards concatenated equal the single-stream output
	def test_record_sink_case_R1(self):
		rng = np.random.default_rng(101)
		with tempfile.TemporaryDirectory() as tmp:
			for case in range(1000):
				count = int(rng.integers(0, 30))
				shard_size = int(rng.integers(1, 10))
				records = [_sample(i, 'line {}\n'.format(rng.integers(0, 1000))) for i in range(count)]
				stream = io.StringIO()
				with RecordSink(stream=stream) as sink:
					sink.write_all(records)
				directory = os.path.join(tmp, str(case))
				with self.assertLogs('CPTFORGE.records', level='INFO'):
					with RecordSink(output_dir=directory, shard_size=shard_size) as sink:
						sink.write_all(records)
				joined = ''
				for name in sink.shards:
					with open(name, encoding='utf-8') as handle:
						joined += handle.read()
				self.assertEqual(joined, stream.getvalue())
				self.assertEqual(len(sink.shards), -(-count // shard_size))
