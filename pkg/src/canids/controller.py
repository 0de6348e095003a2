"""Online deployment pipeline: per-frame rate check, circular history
buffer, prediction, and disposition.

Every incoming frame passes a two-step check. Step one compares its
inter-arrival time against the message's nominal period: arrivals faster
than (1 - tol) * P are dropped outright (flood defense) and never reach
the model or the buffer. Step two predicts the frame's signals from the
buffered history and classifies the deviation; anomalous frames are
dropped and the prediction is cached in their place, so one bad frame
cannot poison the model's own inputs. Slow arrivals (gap above
(1 + tol) * P) are legitimate frames whose preceding gap is suspicious;
they proceed through step two carrying a rate alarm, and the gap itself is
the dropping-attack indicator.

Until the buffer has collected L accepted frames the stream is in warm-up:
frames are rate-checked and buffered but delivered unscored.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .detector import (
    OcsvmModel,
    StaticThreshold,
    deviation_matrix,
    decision_values,
    static_scores,
)
from .predictor import PredictorModel, predict_next
from .traces import ScalingParams, TraceRecord

DISPOSITIONS = ("Delivered", "DroppedAnomalous", "DroppedRateViolation")


@dataclass
class RateCheckerState:
    """Tracks inter-arrival times against the expected period.

    last_timestamp advances on every frame, accepted or not: during a
    flood the bus is busy regardless of what we discard, and anchoring on
    the last accepted frame would let late-in-gap flood frames look
    legitimate.
    """

    expected_period_ms: float
    tolerance_fraction: float = 0.2
    last_timestamp: float | None = None
    recent_gaps: deque = field(default_factory=lambda: deque(maxlen=16))

    def __post_init__(self) -> None:
        if self.expected_period_ms <= 0:
            raise ValueError("expected_period_ms must be positive")
        if not 0.0 < self.tolerance_fraction < 1.0:
            raise ValueError("tolerance_fraction must lie in (0, 1)")


def rate_check(state: RateCheckerState, timestamp: float) -> str:
    """Classify one arrival: 'ok', 'too_fast', or 'too_slow'.

    The first frame ever seen is 'ok' (no gap exists yet). too_slow doubles
    as the dropping-attack signal.
    """
    if state.last_timestamp is None:
        state.last_timestamp = timestamp
        return "ok"
    dt = timestamp - state.last_timestamp
    if dt < 0:
        raise ValueError(
            f"decreasing timestamp: {timestamp} after {state.last_timestamp}")
    state.last_timestamp = timestamp
    state.recent_gaps.append(dt)
    period_s = state.expected_period_ms / 1000.0
    if dt < (1.0 - state.tolerance_fraction) * period_s:
        return "too_fast"
    if dt > (1.0 + state.tolerance_fraction) * period_s:
        return "too_slow"
    return "ok"


def rate_flags(timestamps: np.ndarray, expected_period_ms: float,
               tolerance_fraction: float = 0.2
               ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized offline rate check over a whole trace.

    Returns (too_fast, too_slow) 0/1 arrays; the first record is 'ok'.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if len(ts) and np.any(np.diff(ts) < 0):
        raise ValueError("timestamps must be non-decreasing")
    period_s = expected_period_ms / 1000.0
    fast = np.zeros(len(ts), dtype=np.int64)
    slow = np.zeros(len(ts), dtype=np.int64)
    if len(ts) > 1:
        dt = np.diff(ts)
        fast[1:] = (dt < (1.0 - tolerance_fraction) * period_s).astype(np.int64)
        slow[1:] = (dt > (1.0 + tolerance_fraction) * period_s).astype(np.int64)
    return fast, slow


class HistoryBuffer:
    """Circular store of the L most recent accepted (scaled) signal vectors."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buf: deque[np.ndarray] = deque(maxlen=capacity)

    def push(self, vec: np.ndarray) -> None:
        self._buf.append(np.asarray(vec, dtype=np.float64))

    def __len__(self) -> int:
        return len(self._buf)

    @property
    def full(self) -> bool:
        return len(self._buf) == self.capacity

    def window(self) -> np.ndarray:
        """Contents oldest to newest as an (L, k) array."""
        if not self.full:
            raise ValueError("buffer not yet full")
        return np.stack(list(self._buf))


@dataclass(frozen=True)
class FrameDisposition:
    index: int
    timestamp: float
    disposition: str  # one of DISPOSITIONS
    score: float | None  # None for unscored frames (warm-up / rate drops)
    rate_flag: str  # ok / too_fast / too_slow
    warmup: bool

    def __post_init__(self) -> None:
        if self.disposition not in DISPOSITIONS:
            raise ValueError(f"unknown disposition {self.disposition!r}")


@dataclass(frozen=True)
class OnlineConfig:
    tolerance_fraction: float = 0.2
    substitution: str = "prediction"  # or "freeze": repeat last normal value

    def __post_init__(self) -> None:
        if self.substitution not in ("prediction", "freeze"):
            raise ValueError("substitution must be 'prediction' or 'freeze'")


def run_online(stream, model: PredictorModel,
               detector: OcsvmModel | StaticThreshold, variant: str,
               scaling: ScalingParams, expected_period_ms: float,
               config: OnlineConfig | None = None) -> list[FrameDisposition]:
    """Process raw records through the two-step pipeline.

    `stream` yields TraceRecord objects (raw physical values; scaling is
    applied here). Dispositions partition the stream: every frame gets
    exactly one.
    """
    config = config or OnlineConfig()
    if scaling.signal_count != model.k:
        raise ValueError(
            f"scaling carries {scaling.signal_count} signals, model expects "
            f"{model.k}")
    if isinstance(detector, StaticThreshold):
        if variant != "ST":
            raise ValueError("a StaticThreshold detector implies variant ST")
        mode = "Max"
    else:
        if variant == "ST":
            raise ValueError("variant ST requires a StaticThreshold detector")
        mode = variant
        expected_dim = model.k if variant == "Diff" else 1
        if detector.dim != expected_dim:
            raise ValueError(
                f"detector dimension {detector.dim} does not fit variant "
                f"{variant} with k={model.k}")
    L = model.hyper.subsequence_length
    state = RateCheckerState(expected_period_ms=expected_period_ms,
                             tolerance_fraction=config.tolerance_fraction)
    buf = HistoryBuffer(L)
    out: list[FrameDisposition] = []
    for i, rec in enumerate(stream):
        if isinstance(rec, TraceRecord):
            raw = np.asarray(rec.signals, dtype=np.float64)
            ts = rec.timestamp
        else:
            ts, raw = rec
            raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != (model.k,):
            raise ValueError(
                f"frame {i} carries {raw.shape[0] if raw.ndim else 0} "
                f"signals, model expects {model.k}")
        flag = rate_check(state, ts)
        if flag == "too_fast":
            out.append(FrameDisposition(index=i, timestamp=ts,
                                        disposition="DroppedRateViolation",
                                        score=None, rate_flag=flag,
                                        warmup=not buf.full))
            continue
        scaled = scaling.apply(raw)
        if not buf.full:
            buf.push(scaled)
            out.append(FrameDisposition(index=i, timestamp=ts,
                                        disposition="Delivered", score=None,
                                        rate_flag=flag, warmup=True))
            continue
        window = buf.window()
        pred = predict_next(model, window)
        dev = deviation_matrix(pred[None], scaled[None], mode)
        if isinstance(detector, StaticThreshold):
            score = float(static_scores(detector, dev)[0])
        else:
            score = float(decision_values(detector, dev)[0])
        if score < 0.0:
            if config.substitution == "prediction":
                buf.push(pred)
            else:
                buf.push(np.array(window[-1]))
            out.append(FrameDisposition(index=i, timestamp=ts,
                                        disposition="DroppedAnomalous",
                                        score=score, rate_flag=flag,
                                        warmup=False))
        else:
            buf.push(scaled)
            out.append(FrameDisposition(index=i, timestamp=ts,
                                        disposition="Delivered", score=score,
                                        rate_flag=flag, warmup=False))
    return out


def dispositions_csv(dispositions: list[FrameDisposition],
                     provenance: dict | None = None) -> str:
    """The disposition log in its documented CSV form."""
    lines = [f"# {k}: {v}" for k, v in (provenance or {}).items()]
    lines.append("timestamp,disposition,score")
    for d in dispositions:
        score = "" if d.score is None else f"{d.score:.9g}"
        lines.append(f"{d.timestamp:.9g},{d.disposition},{score}")
    return "\n".join(lines) + "\n"
