"""Experiment configuration: a single JSON file drives every pipeline stage.

Schema (all keys validated, unknown keys rejected; dotted paths below name
nested objects):

    seed                  integer, base seed; stage seeds derive from it
    schema.message_id     int or hex string         (e.g. "0x101")
    schema.signal_count   int >= 1
    schema.nominal_period_ms  float > 0
    schema.signal_names   optional list of names
    signals               list of signal generator specs (see tracegen)
    generation.train_duration_s / test_duration_s    floats > 0
    attacks               {"suite": "default", ...knobs} or
                          {"list": [attack spec dicts with absolute times]}
    predictor.*           PredictorHyper fields + train_ratio
    detector.*            variant, nu, gamma (null = 1/d), percentile,
                          tol, max_iter, max_train_points
    baselines.*           bollinger_window, bollinger_band_width,
                          lof_k, lof_threshold
    controller.*          tolerance_fraction, substitution

Validation failures raise ConfigError naming the offending key path; JSON
syntax errors keep the decoder's line/column position.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .controller import OnlineConfig
from .detector import VARIANTS
from .predictor import PredictorHyper
from .tracegen import PAYLOAD_MODES, AttackSpec, SignalGenSpec
from .traces import MessageSchema


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    train_duration_s: float = 90.0
    test_duration_s: float = 60.0

    def __post_init__(self) -> None:
        if self.train_duration_s <= 0 or self.test_duration_s <= 0:
            raise ConfigError("generation durations must be positive")


@dataclass(frozen=True)
class SuiteConfig:
    """Knobs for the default five-attack suite; fractions are of the
    observed raw range of the target signal."""

    target_signal: int = 0
    constant_offset: float = 0.25
    continuous_increment: float = 0.002
    continuous_offset: float = 0.3
    multiplier: int = 10
    payload_mode: str = "repeat-last"

    def __post_init__(self) -> None:
        if self.target_signal < 0:
            raise ConfigError("attacks.target_signal must be >= 0")
        if self.continuous_increment <= 0:
            raise ConfigError("attacks.continuous_increment must be positive")
        if self.multiplier < 2:
            raise ConfigError("attacks.multiplier must be >= 2")
        if self.payload_mode not in PAYLOAD_MODES:
            raise ConfigError(
                f"attacks.payload_mode must be one of {PAYLOAD_MODES}")


@dataclass(frozen=True)
class DetectorConfig:
    variant: str = "Diff"
    nu: float = 0.01
    gamma: float | None = None
    percentile: float = 99.9
    tol: float = 1e-3
    max_iter: int = 10_000_000
    max_train_points: int = 2000

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"detector.variant must be one of {VARIANTS}, "
                f"got {self.variant!r}")
        if not 0 < self.nu <= 1:
            raise ConfigError("detector.nu must lie in (0, 1]")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("detector.gamma must be positive or null")
        if not 50 < self.percentile <= 100:
            raise ConfigError("detector.percentile must lie in (50, 100]")
        if self.tol <= 0 or self.max_iter < 1 or self.max_train_points < 2:
            raise ConfigError("detector.tol/max_iter/max_train_points invalid")


@dataclass(frozen=True)
class BaselineConfig:
    bollinger_window: int = 20
    bollinger_band_width: float = 2.0
    lof_k: int = 20
    lof_threshold: float = 1.5

    def __post_init__(self) -> None:
        if self.bollinger_window < 2:
            raise ConfigError("baselines.bollinger_window must be >= 2")
        if self.bollinger_band_width <= 0:
            raise ConfigError("baselines.bollinger_band_width must be positive")
        if self.lof_k < 1:
            raise ConfigError("baselines.lof_k must be >= 1")
        if self.lof_threshold <= 1:
            raise ConfigError("baselines.lof_threshold must exceed 1")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    schema: MessageSchema
    signals: tuple[SignalGenSpec, ...]
    generation: GenerationConfig
    suite: SuiteConfig | None  # default-suite mode
    attack_list: tuple[AttackSpec, ...] | None  # explicit mode
    hyper: PredictorHyper
    train_ratio: float
    detector: DetectorConfig
    baselines: BaselineConfig
    controller: OnlineConfig
    config_hash: str = ""
    source_path: str = ""

    def __post_init__(self) -> None:
        if len(self.signals) != self.schema.signal_count:
            raise ConfigError(
                f"signals lists {len(self.signals)} generators but "
                f"schema.signal_count is {self.schema.signal_count}")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("predictor.train_ratio must lie in (0, 1)")
        if (self.suite is None) == (self.attack_list is None):
            raise ConfigError(
                "attacks must specify exactly one of 'suite' or 'list'")
        if self.suite is not None \
                and self.suite.target_signal >= self.schema.signal_count:
            raise ConfigError(
                "attacks.target_signal outside the schema's signal range")


def _expect_keys(d: dict, path: str, allowed: set[str]) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")


def _get(d: dict, path: str, key: str, kind, default=...,
         required: bool = False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: required key missing")
        return default
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    bad_bool = isinstance(v, bool) and kind in (int, float)
    if bad_bool or (kind is not None and not isinstance(v, kind)):
        raise ConfigError(
            f"{path}.{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(v).__name__}")
    return v


def _parse_schema(d: dict) -> MessageSchema:
    _expect_keys(d, "schema", {"message_id", "signal_count",
                               "nominal_period_ms", "signal_names"})
    mid = d.get("message_id")
    if isinstance(mid, str):
        try:
            mid = int(mid, 0)
        except ValueError:
            raise ConfigError(
                f"schema.message_id: not a valid integer: {mid!r}") from None
    if not isinstance(mid, int):
        raise ConfigError("schema.message_id: required int or hex string")
    try:
        return MessageSchema(
            message_id=mid,
            signal_count=_get(d, "schema", "signal_count", int, required=True),
            nominal_period_ms=_get(d, "schema", "nominal_period_ms", float,
                                   required=True),
            signal_names=tuple(d.get("signal_names", ())),
        )
    except ValueError as exc:
        raise ConfigError(f"schema: {exc}") from None


def _parse_dataclass(d: dict, path: str, cls, field_names: set[str]):
    _expect_keys(d, path, field_names)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config_dict(doc: dict, config_hash: str = "",
                     source_path: str = "") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    _expect_keys(doc, "config", {
        "seed", "schema", "signals", "generation", "attacks", "predictor",
        "detector", "baselines", "controller"})
    seed = _get(doc, "config", "seed", int, required=True)
    if "schema" not in doc:
        raise ConfigError("schema: required key missing")
    schema = _parse_schema(doc["schema"])
    raw_signals = doc.get("signals")
    if not isinstance(raw_signals, list) or not raw_signals:
        raise ConfigError("signals: required non-empty list")
    signals = []
    for i, sd in enumerate(raw_signals):
        try:
            signals.append(SignalGenSpec.from_dict(sd))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"signals[{i}]: {exc}") from None

    generation = _parse_dataclass(doc.get("generation", {}), "generation",
                                  GenerationConfig,
                                  {"train_duration_s", "test_duration_s"})

    attacks_doc = doc.get("attacks", {"suite": "default"})
    suite = None
    attack_list = None
    if "list" in attacks_doc:
        _expect_keys(attacks_doc, "attacks", {"list"})
        attack_list = []
        for i, ad in enumerate(attacks_doc["list"]):
            try:
                attack_list.append(AttackSpec.from_dict(ad))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"attacks.list[{i}]: {exc}") from None
        attack_list = tuple(attack_list)
    else:
        if attacks_doc.get("suite", "default") != "default":
            raise ConfigError(
                f"attacks.suite: only 'default' is defined, "
                f"got {attacks_doc.get('suite')!r}")
        knobs = {k: v for k, v in attacks_doc.items() if k != "suite"}
        suite = _parse_dataclass(
            knobs, "attacks", SuiteConfig,
            {"target_signal", "constant_offset", "continuous_increment",
             "continuous_offset", "multiplier", "payload_mode"})

    pred_doc = dict(doc.get("predictor", {}))
    train_ratio = pred_doc.pop("train_ratio", 0.8)
    hyper = _parse_dataclass(
        pred_doc, "predictor", PredictorHyper,
        {"subsequence_length", "embed_dim", "hidden_dim", "batch_size",
         "learning_rate", "max_epochs", "patience", "loss_mode"})
    detector = _parse_dataclass(
        doc.get("detector", {}), "detector", DetectorConfig,
        {"variant", "nu", "gamma", "percentile", "tol", "max_iter",
         "max_train_points"})
    baselines = _parse_dataclass(
        doc.get("baselines", {}), "baselines", BaselineConfig,
        {"bollinger_window", "bollinger_band_width", "lof_k", "lof_threshold"})
    try:
        controller = _parse_dataclass(
            doc.get("controller", {}), "controller", OnlineConfig,
            {"tolerance_fraction", "substitution"})
    except ValueError as exc:
        raise ConfigError(f"controller: {exc}") from None

    return ExperimentConfig(
        seed=seed, schema=schema, signals=tuple(signals),
        generation=generation, suite=suite, attack_list=attack_list,
        hyper=hyper, train_ratio=float(train_ratio), detector=detector,
        baselines=baselines, controller=controller,
        config_hash=config_hash, source_path=source_path)


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate a config file; nothing is written on failure."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from None
    digest = hashlib.sha256(raw).hexdigest()[:16]
    return load_config_dict(doc, config_hash=digest, source_path=str(path))
