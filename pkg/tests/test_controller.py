"""Online pipeline: rate checking, history buffer, per-frame dispositions."""

import numpy as np
import pytest

from canids.controller import (
    FrameDisposition,
    HistoryBuffer,
    OnlineConfig,
    RateCheckerState,
    dispositions_csv,
    rate_check,
    rate_flags,
    run_online,
)
from canids.detector import StaticThreshold, fit_ocsvm
from canids.predictor import PredictorHyper, build_model
from canids.traces import ScalingParams

HYPER = PredictorHyper(subsequence_length=4, embed_dim=4, hidden_dim=4,
                       batch_size=8, learning_rate=1e-3, max_epochs=3,
                       patience=2)


def _unit_scaling(k: int) -> ScalingParams:
    return ScalingParams(mins=np.zeros(k), maxs=np.ones(k))


class TestRateCheck:
    def test_first_frame_is_ok(self):
        st = RateCheckerState(expected_period_ms=15.0)
        assert rate_check(st, 0.0) == "ok"

    def test_classification_against_nominal_period(self):
        # P = 15 ms, tolerance 20%: accept gaps in [12, 18] ms
        st = RateCheckerState(expected_period_ms=15.0)
        assert rate_check(st, 0.000) == "ok"
        assert rate_check(st, 0.0015) == "too_fast"  # 1.5 ms gap
        assert rate_check(st, 0.0165) == "ok"        # 15 ms gap
        assert rate_check(st, 0.0765) == "too_slow"  # 60 ms gap
        assert rate_check(st, 0.0895) == "ok"        # 13 ms gap

    def test_gap_measured_from_previous_frame_not_previous_accepted(self):
        # during a flood every frame updates the anchor, so a frame one
        # nominal period after the last flood frame looks legitimate
        st = RateCheckerState(expected_period_ms=15.0)
        rate_check(st, 0.0)
        for i in range(1, 6):
            assert rate_check(st, i * 0.0015) == "too_fast"
        assert rate_check(st, 5 * 0.0015 + 0.015) == "ok"

    def test_decreasing_timestamp_rejected(self):
        st = RateCheckerState(expected_period_ms=15.0)
        rate_check(st, 1.0)
        with pytest.raises(ValueError, match="decreasing"):
            rate_check(st, 0.5)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            RateCheckerState(expected_period_ms=0.0)
        with pytest.raises(ValueError):
            RateCheckerState(expected_period_ms=15.0, tolerance_fraction=1.2)


class TestRateFlags:
    def test_matches_sequential_checker(self):
        rng = np.random.default_rng(0)
        gaps = rng.choice([0.001, 0.013, 0.015, 0.025], size=200)
        ts = np.concatenate([[0.0], np.cumsum(gaps)])
        fast, slow = rate_flags(ts, expected_period_ms=15.0)
        st = RateCheckerState(expected_period_ms=15.0)
        for i, t in enumerate(ts):
            verdict = rate_check(st, t)
            assert fast[i] == (verdict == "too_fast")
            assert slow[i] == (verdict == "too_slow")

    def test_clean_exact_period_stream_has_zero_violations(self):
        ts = np.arange(10_000) * 0.015
        fast, slow = rate_flags(ts, expected_period_ms=15.0,
                                tolerance_fraction=0.2)
        assert fast.sum() == 0
        assert slow.sum() == 0

    def test_unsorted_timestamps_rejected(self):
        with pytest.raises(ValueError):
            rate_flags(np.array([0.0, 0.2, 0.1]), expected_period_ms=15.0)


class TestHistoryBuffer:
    def test_window_orders_oldest_to_newest(self):
        buf = HistoryBuffer(3)
        for v in ([1.0], [2.0], [3.0]):
            buf.push(np.array(v))
        assert np.array_equal(buf.window(), [[1.0], [2.0], [3.0]])

    def test_eviction_keeps_the_most_recent(self):
        buf = HistoryBuffer(2)
        for v in ([1.0], [2.0], [3.0]):
            buf.push(np.array(v))
        assert np.array_equal(buf.window(), [[2.0], [3.0]])

    def test_window_before_full_rejected(self):
        buf = HistoryBuffer(2)
        buf.push(np.array([1.0]))
        assert not buf.full
        with pytest.raises(ValueError, match="full"):
            buf.window()

    def test_capacity_validation(self):
        with pytest.raises(ValueError):
            HistoryBuffer(0)


def _clean_stream(n: int, k: int = 2, period: float = 0.015):
    rng = np.random.default_rng(7)
    for i in range(n):
        yield i * period, 0.5 + 0.1 * rng.standard_normal(k)


class TestRunOnline:
    def test_clean_stream_is_fully_delivered(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=100.0)  # nothing can exceed this
        out = run_online(_clean_stream(40), model, det, "ST",
                         _unit_scaling(2), expected_period_ms=15.0)
        assert len(out) == 40
        assert all(d.disposition == "Delivered" for d in out)
        # warm-up: first L frames are delivered unscored
        L = HYPER.subsequence_length
        assert all(d.warmup and d.score is None for d in out[:L])
        assert all((not d.warmup) and d.score is not None for d in out[L:])
        assert all(d.score >= 0 for d in out[L:])

    def test_every_frame_gets_exactly_one_disposition(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=1e-9)
        out = run_online(_clean_stream(25), model, det, "ST",
                         _unit_scaling(2), expected_period_ms=15.0)
        assert [d.index for d in out] == list(range(25))

    def test_flood_frames_are_dropped_before_the_model(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=100.0)
        ts = [0.000, 0.015, 0.030]
        ts += [0.0315 + i * 0.0015 for i in range(8)]  # 10x flood burst
        ts += [ts[-1] + 0.015, ts[-1] + 0.030]
        stream = [(t, np.array([0.5, 0.5])) for t in ts]
        out = run_online(stream, model, det, "ST", _unit_scaling(2),
                         expected_period_ms=15.0)
        flood = out[3:11]
        assert all(d.disposition == "DroppedRateViolation" for d in flood)
        assert all(d.score is None for d in flood)
        # flagged on the very first flood frame: within the 3-frame bound
        assert out[3].rate_flag == "too_fast"
        # the stream recovers afterwards
        assert out[-1].disposition == "Delivered"

    def test_anomalous_frames_are_dropped_with_negative_scores(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=1e-9)  # everything anomalous
        out = run_online(_clean_stream(20), model, det, "ST",
                         _unit_scaling(2), expected_period_ms=15.0)
        L = HYPER.subsequence_length
        post = out[L:]
        assert all(d.disposition == "DroppedAnomalous" for d in post)
        assert all(d.score < 0 for d in post)

    @pytest.mark.parametrize("substitution", ["prediction", "freeze"])
    def test_substitution_modes_run(self, substitution):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=1e-9)
        out = run_online(_clean_stream(15), model, det, "ST",
                         _unit_scaling(2), expected_period_ms=15.0,
                         config=OnlineConfig(substitution=substitution))
        assert len(out) == 15

    def test_ocsvm_detector_with_diff_variant(self):
        rng = np.random.default_rng(1)
        det = fit_ocsvm(rng.normal(size=(30, 2)) * 0.01, nu=0.2)
        model = build_model(k=2, hyper=HYPER, seed=0)
        out = run_online(_clean_stream(20), model, det, "Diff",
                         _unit_scaling(2), expected_period_ms=15.0)
        assert len(out) == 20
        scored = [d for d in out if d.score is not None]
        assert scored, "expected at least one scored frame"

    def test_variant_detector_pairing_enforced(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        st = StaticThreshold(threshold=1.0)
        svm = fit_ocsvm(np.random.default_rng(2).normal(size=(10, 2)), nu=0.3)
        with pytest.raises(ValueError, match="ST"):
            run_online([], model, st, "Diff", _unit_scaling(2), 15.0)
        with pytest.raises(ValueError, match="StaticThreshold"):
            run_online([], model, svm, "ST", _unit_scaling(2), 15.0)
        # Sum needs a 1-D detector, not a k-D one
        with pytest.raises(ValueError, match="dimension"):
            run_online([], model, svm, "Sum", _unit_scaling(2), 15.0)

    def test_frame_width_must_match_model(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=1.0)
        stream = [(0.0, np.array([0.5, 0.5, 0.5]))]
        with pytest.raises(ValueError, match="signals"):
            run_online(stream, model, det, "ST", _unit_scaling(3), 15.0)

    def test_scaling_width_must_match_model(self):
        model = build_model(k=2, hyper=HYPER, seed=0)
        det = StaticThreshold(threshold=1.0)
        with pytest.raises(ValueError, match="scaling"):
            run_online([], model, det, "ST", _unit_scaling(3), 15.0)

    def test_online_config_validation(self):
        with pytest.raises(ValueError, match="substitution"):
            OnlineConfig(substitution="interpolate")

    def test_unknown_disposition_rejected(self):
        with pytest.raises(ValueError, match="disposition"):
            FrameDisposition(index=0, timestamp=0.0, disposition="Quarantine",
                             score=None, rate_flag="ok", warmup=False)


class TestDispositionsCsv:
    def test_layout(self):
        rows = [
            FrameDisposition(index=0, timestamp=0.0, disposition="Delivered",
                             score=None, rate_flag="ok", warmup=True),
            FrameDisposition(index=1, timestamp=0.015,
                             disposition="DroppedAnomalous", score=-0.25,
                             rate_flag="ok", warmup=False),
        ]
        text = dispositions_csv(rows, provenance={"tool": "canids 0"})
        lines = text.strip().splitlines()
        assert lines[0] == "# tool: canids 0"
        assert lines[1] == "timestamp,disposition,score"
        assert lines[2] == "0,Delivered,"
        assert lines[3] == "0.015,DroppedAnomalous,-0.25"
