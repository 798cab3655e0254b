import math
from collections import Counter

import numpy as np
from django.test import SimpleTestCase

from CPTFORGE.exceptions import ForgeError, PolicyError, StreamOrder
from CPTFORGE.monitor import (
	FindingKind, MonitorConfig, MonitorState, RunEvent, observe, reduction_pct, summarize, throughput,
)

'''
Fixed Test Cases Index

	#Stream Test
		#Test Case S1 - 200 events with a NaN triple, a 1.6x loss and a 7.3x grad norm

	#Spike Test
		#Test Case K1 - 20 losses of 1.0 then 1.6 is a spike
		#Test Case K2 - 20 losses of 1.0 then 1.5 is not
		#Test Case K3 - No spike before the window is full
		#Test Case K4 - Grad window mean 3.9 then 28.46 is a spike
		#Test Case K5 - Non-finite losses stay out of the loss window

	#NaN Test
		#Test Case N1 - Third consecutive NaN also raises EmergencySave
		#Test Case N2 - A finite loss resets the run of NaNs

	#Throughput Test
		#Test Case T1 - 524,288 tokens in 60.3 s
		#Test Case T2 - Two equal events give the same rate

	#Summary Test
		#Test Case U1 - 0.881 at step 10 down to 0.265 is 69.9%
		#Test Case U2 - Anchor falls on the first step after 10 when 10 is missing
		#Test Case U3 - Constant stream gives 0% and min equal to final
		#Test Case U4 - Findings reach the sink in order
		#Test Case U5 - An all-NaN stream is summarized without loss figures

	#Error Test
		#Test Case E1 - Repeated or decreasing step
		#Test Case E2 - Non-positive step time
		#Test Case E3 - Empty stream and bad config

	#Property Test
		#Test Case R1 - Windows stay bounded, counters only grow, nan_count <= anomaly_count
'''


def _event(step, loss=1.0, grad=None, seconds=1.0, tokens=0, preview=None):
	return RunEvent(step=step, loss=loss, step_time_s=seconds, tokens_in_step=tokens,
					grad_norm_post_clip=grad, batch_preview=preview)


def _flat_state(count=20, loss=1.0, grad=None):
	state = MonitorState()
	for step in range(count):
		observe(state, _event(step, loss, grad))
	return state


def _planted_stream():
	events = []
	for step in range(200):
		loss, grad = 1.0, 3.9
		if step == 50:
			loss = 1.6
		elif step in (100, 101, 102):
			loss = float('nan')
		elif step == 150:
			grad = 3.9 * 7.3
		events.append(_event(step, loss, grad, seconds=2.0, tokens=4096, preview='batch {}'.format(step)))
	return events


class Monitor_Tests(SimpleTestCase):

	#Test Case S1 - 200 events with a NaN triple, a 1.6x loss and a 7.3x grad norm
	def test_observe_case_S1(self):
		state = MonitorState()
		findings = []
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			for event in _planted_stream():
				findings.extend(observe(state, event))
		kinds = Counter(finding.kind for finding in findings)
		self.assertEqual(kinds[FindingKind.EMERGENCY_SAVE], 1)
		self.assertEqual(kinds[FindingKind.LOSS_SPIKE], 1)
		self.assertEqual(kinds[FindingKind.GRAD_SPIKE], 1)
		self.assertEqual(kinds[FindingKind.NAN_INF], 3)
		self.assertEqual(state.nan_count, 3)
		self.assertEqual(state.anomaly_count, 6)
		steps = {finding.kind: finding.step for finding in findings}
		self.assertEqual(steps[FindingKind.LOSS_SPIKE], 50)
		self.assertEqual(steps[FindingKind.EMERGENCY_SAVE], 102)
		self.assertEqual(steps[FindingKind.GRAD_SPIKE], 150)
		nan = [f for f in findings if f.kind is FindingKind.NAN_INF]
		self.assertEqual(nan[0].batch_preview, 'batch 100')

	#Test Case K1 - 20 losses of 1.0 then 1.6 is a spike
	def test_observe_case_K1(self):
		state = _flat_state()
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			findings = observe(state, _event(20, 1.6))
		self.assertEqual([f.kind for f in findings], [FindingKind.LOSS_SPIKE])
		self.assertEqual(findings[0].reference, 1.0)

	#Test Case K2 - 20 losses of 1.0 then 1.5 is not
	def test_observe_case_K2(self):
		self.assertEqual(observe(_flat_state(), _event(20, 1.5)), [])

	#Test Case K3 - No spike before the window is full
	def test_observe_case_K3(self):
		self.assertEqual(observe(_flat_state(count=19), _event(19, 5.0)), [])

	#Test Case K4 - Grad window mean 3.9 then 28.46 is a spike
	def test_observe_case_K4(self):
		state = _flat_state(grad=3.9)
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			findings = observe(state, _event(20, 1.0, grad=28.46))
		self.assertEqual([f.kind for f in findings], [FindingKind.GRAD_SPIKE])
		self.assertAlmostEqual(findings[0].reference, 3.9)
		self.assertEqual(observe(_flat_state(grad=3.9), _event(20, 1.0, grad=7.0)), [])

	#Test Case K5 - Non-finite losses stay out of the loss window
	def test_observe_case_K5(self):
		state = _flat_state()
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			observe(state, _event(20, float('inf')))
			observe(state, _event(21, float('-inf')))
		self.assertEqual(list(state.loss_window), [1.0] * 20)
		self.assertTrue(all(math.isfinite(loss) for loss in state.loss_window))

	#Test Case N1 - Third consecutive NaN also raises EmergencySave
	def test_observe_case_N1(self):
		state = MonitorState()
		with self.assertLogs('CPTFORGE.monitor', level='WARNING') as logs:
			results = [observe(state, _event(step, float('nan'), preview='p')) for step in range(3)]
		self.assertEqual([len(r) for r in results], [1, 1, 2])
		self.assertEqual(results[2][1].kind, FindingKind.EMERGENCY_SAVE)
		self.assertEqual(state.emergency_saves, 1)
		self.assertTrue(any(line.startswith('ERROR') for line in logs.output))
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			fourth = observe(state, _event(3, float('nan')))
		self.assertEqual([f.kind for f in fourth], [FindingKind.NAN_INF])

	#Test Case N2 - A finite loss resets the run of NaNs
	def test_observe_case_N2(self):
		state = MonitorState()
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			for step, loss in enumerate([float('nan'), float('nan'), 1.0, float('nan'), float('nan')]):
				observe(state, _event(step, loss))
		self.assertEqual(state.emergency_saves, 0)
		self.assertEqual(state.consecutive_nan, 2)
		self.assertEqual(state.nan_count, 4)

	#Test Case T1 - 524,288 tokens in 60.3 s
	def test_throughput_case_T1(self):
		state = MonitorState()
		observe(state, _event(0, seconds=60.3, tokens=524288))
		self.assertAlmostEqual(throughput(state), 8694.7, places=1)

	#Test Case T2 - Two equal events give the same rate
	def test_throughput_case_T2(self):
		state = MonitorState()
		observe(state, _event(0, seconds=60.3, tokens=524288))
		single = throughput(state)
		observe(state, _event(1, seconds=60.3, tokens=524288))
		self.assertAlmostEqual(throughput(state), single)
		with self.assertRaises(ForgeError):
			throughput(MonitorState())

	#Test Case U1 - 0.881 at step 10 down to 0.265 is 69.9%
	def test_summarize_case_U1(self):
		summary = summarize([_event(0, 1.2), _event(10, 0.881), _event(20, 0.265)])
		self.assertEqual(summary.init_loss, 0.881)
		self.assertEqual(summary.final_loss, 0.265)
		self.assertEqual(summary.min_loss, 0.265)
		self.assertEqual(round(summary.reduction_pct, 1), 69.9)
		self.assertEqual(round(reduction_pct(1.426, 1.015), 1), 28.8)
		self.assertIsNone(summary.peak_grad)
		self.assertTrue(summary.to_record()['summary'])

	#Test Case U2 - Anchor falls on the first step after 10 when 10 is missing
	def test_summarize_case_U2(self):
		events = [_event(0, 2.0, grad=1.0), _event(5, 1.8, grad=3.0), _event(12, 1.5, grad=2.0), _event(20, 1.2)]
		summary = summarize(events)
		self.assertEqual(summary.init_loss, 1.5)
		self.assertEqual((summary.peak_grad, summary.mean_grad), (3.0, 2.0))
		self.assertEqual(summary.steps, 4)
		only_early = summarize([_event(0, 2.0), _event(5, 1.0)])
		self.assertEqual(only_early.init_loss, 2.0)

	#Test Case U3 - Constant stream gives 0% and min equal to final
	def test_summarize_case_U3(self):
		events = [_event(step, 0.7, seconds=0.5, tokens=100) for step in range(30)]
		summary = summarize(events)
		self.assertEqual(summary.reduction_pct, 0.0)
		self.assertEqual(summary.min_loss, summary.final_loss)
		self.assertEqual(summary.tokens, 3000)
		self.assertEqual(summary.mean_throughput, 200.0)
		self.assertEqual(summarize(events), summary)

	#Test Case U4 - Findings reach the sink in order
	def test_summarize_case_U4(self):
		seen = []
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			summary = summarize(_planted_stream(), sink=seen.append)
		self.assertEqual([f.step for f in seen], sorted(f.step for f in seen))
		self.assertEqual(len(seen), summary.anomaly_count)
		self.assertEqual((summary.nan_count, summary.emergency_saves), (3, 1))
		self.assertAlmostEqual(summary.mean_throughput, 2048.0)

	#Test Case U5 - An all-NaN stream is summarized without loss figures
	def test_summarize_case_U5(self):
		seen = []
		events = [_event(step, float('nan'), grad=2.0, tokens=100) for step in range(3)]
		with self.assertLogs('CPTFORGE.monitor', level='WARNING') as logs:
			summary = summarize(events, sink=seen.append)
		self.assertEqual([f.kind for f in seen], [FindingKind.NAN_INF] * 3 + [FindingKind.EMERGENCY_SAVE])
		self.assertEqual((summary.init_loss, summary.final_loss, summary.min_loss, summary.reduction_pct), (None,) * 4)
		self.assertEqual((summary.nan_count, summary.emergency_saves, summary.steps), (3, 1, 3))
		self.assertEqual(summary.peak_grad, 2.0)
		self.assertTrue(any('no finite loss' in line for line in logs.output))

	#Test Case E1 - Repeated or decreasing step
	def test_observe_case_E1(self):
		state = MonitorState()
		observe(state, _event(5))
		with self.assertRaises(StreamOrder):
			observe(state, _event(5))
		with self.assertRaises(StreamOrder):
			observe(state, _event(4))

	#Test Case E2 - Non-positive step time
	def test_observe_case_E2(self):
		with self.assertRaises(ForgeError):
			observe(MonitorState(), _event(0, seconds=0.0))

	#Test Case E3 - Empty stream and bad config
	def test_summarize_case_E3(self):
		with self.assertRaises(ForgeError):
			summarize([])
		with self.assertRaises(PolicyError):
			MonitorConfig(loss_window=0)
		with self.assertRaises(PolicyError):
			MonitorConfig(grad_spike_factor=0)

	#Test Case R1 - Windows stay bounded, counters only grow, nan_count <= anomaly_count
	def test_observe_case_R1(self):
		rng = np.random.default_rng(71)
		state = MonitorState(MonitorConfig(loss_window=7, grad_window=5, throughput_window=3))
		previous = 0
		with self.assertLogs('CPTFORGE.monitor', level='WARNING'):
			for step in range(1000):
				roll = rng.random()
				loss = float('nan') if roll < 0.05 else float(rng.uniform(0.5, 3.0))
				grad = None if roll > 0.9 else float(rng.uniform(0.1, 10.0))
				observe(state, _event(step, loss, grad, seconds=float(rng.uniform(0.1, 2.0))))
				self.assertLessEqual(len(state.loss_window), 7)
				self.assertLessEqual(len(state.grad_window), 5)
				self.assertLessEqual(len(state.throughput_window), 3)
				self.assertGreaterEqual(state.anomaly_count, previous)
				self.assertLessEqual(state.nan_count, state.anomaly_count)
				previous = state.anomaly_count
