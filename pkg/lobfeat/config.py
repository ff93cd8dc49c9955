#!/usr/bin/env python3
"""
lobfeat - Configuration Settings
"""

import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigError

logger = logging.getLogger(__name__)

# MacKinnon (2010) response-surface coefficients for two variables with a
# constant in the cointegrating regression: crit(T) = b0 + b1/T + b2/T^2
ADF_CRITICAL_VALUES: Dict[str, Tuple[float, float, float]] = {
    "1%": (-3.89644, -10.9519, -22.527),
    "5%": (-3.33613, -6.1101, -6.823),
    "10%": (-3.04445, -4.2412, -2.720),
}


@dataclass
class BookConfig:
    """Order book layout"""
    levels: int = 10
    block_size: int = 10  # events per block


@dataclass
class LobFeatureConfig:
    """First feature group (order book state and intensities)"""
    long_window_blocks: int = 50


@dataclass
class TechnicalConfig:
    """Technical indicator windows and constants"""
    # moving averages
    ma_window: int = 10  # tema, t3, trima and zlema chains
    dema_window: int = 20
    hull_window: int = 10
    alligator_windows: Tuple[int, int, int] = (13, 8, 5)  # jaw, teeth, lips
    t3_volume_factor: float = 0.7
    zlema_lag: int = 4
    vma_lookback: int = 3
    # oscillators
    awesome_windows: Tuple[int, int] = (5, 34)
    accelerator_window: int = 5
    apo_windows: Tuple[int, int] = (5, 13)
    macd_windows: Tuple[int, int] = (12, 26)
    cmo_window: int = 19
    chaikin_windows: Tuple[int, int] = (3, 10)
    cog_window: int = 10
    dpo_window: int = 10
    dpo_standard: bool = False
    roc_window: int = 12
    rsi_window: int = 14
    stoch_rsi_window: int = 10
    trix_window: int = 10
    tsi_windows: Tuple[int, int] = (25, 13)
    ultimate_windows: Tuple[int, int, int] = (7, 14, 28)  # weighted 4:2:1
    williams_window: int = 14
    aroon_window: int = 20
    adx_window: int = 14
    # channels and bands
    bollinger_window: int = 20
    bollinger_width: float = 2.0
    keltner_window: int = 20
    keltner_atr_window: int = 10
    keltner_width: float = 2.0
    donchian_window: int = 20
    chandelier_window: int = 22
    chandelier_multiplier: float = 3.0
    ichimoku_windows: Tuple[int, int, int] = (9, 26, 52)  # conversion, base, span B
    atr_window: int = 14
    deviation_window: int = 10
    psar_initial_af: float = 0.02
    psar_step: float = 0.02
    psar_max_af: float = 0.2
    psar_extreme_window: int = 5
    # regression and filters
    savgol_window: int = 9
    savgol_degree: int = 3
    filter_lookback: int = 10
    beta_window: int = 10

    _NOT_WINDOWS = ("zlema_lag", "savgol_degree")

    def windows(self) -> Dict[str, int]:
        """Every integer window, tuple members suffixed with their position"""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out.update({f"{f.name}[{i}]": v for i, v in enumerate(value)})
            elif isinstance(value, int) and not isinstance(value, bool) and f.name not in self._NOT_WINDOWS:
                out[f.name] = value
        return out


@dataclass
class QuantConfig:
    """Quantitative feature windows"""
    correlation_window: int = 100
    max_lag: int = 9
    coint_window: int = 100
    coint_min_window: int = 30
    adf_lags: int = 1
    critical_values_file: Optional[str] = None
    logistic_levels: int = 6
    logistic_ridge: float = 1e-6
    logistic_max_halvings: int = 20
    logistic_buffer: int = 500  # most recent (V9, y10) pairs used per update


@dataclass
class SelectionConfig:
    """Wrapper feature selection"""
    entropy_bins: int = 100
    fit_fraction: float = 0.8
    ridge: float = 1e-6
    max_greedy_steps: Optional[int] = None  # None ranks every feature greedily
    workers: int = 1


@dataclass
class ClassifierConfig:
    """LMS / LDA / RBFN classifiers"""
    lms_bias: bool = True
    rbfn_prototypes: int = 60
    rbfn_spread: Optional[float] = None  # None = median prototype distance
    rbfn_ridge: float = 1e-3
    kmeans_max_iter: int = 100


@dataclass
class ProtocolConfig:
    """Labeling, normalization and anchored cross-validation"""
    horizons: Tuple[int, ...] = (1, 2, 3)
    gamma: float = 0.002
    smoothing_span: int = 9
    smoother: str = "ema"  # ema, centered
    zscore_floor: float = 1e-12
    methods: Tuple[str, ...] = ("entropy", "lms1", "lms2", "lda1", "lda2")
    classifiers: Tuple[str, ...] = ("lms", "lda", "rbfn")
    feature_counts: Tuple[int, ...] = (5, 50, 100, 200, 273)
    curve_step: int = 10
    rerank_per_fold: bool = False
    pool: str = "all"  # all, lob, technical, quant
    workers: int = 4


@dataclass
class ServerConfig:
    """Report service settings"""
    host: str = "localhost"
    port: int = 8000
    log_level: str = "info"
    runs_dir: str = "runs"


@dataclass
class LobfeatConfig:
    book: BookConfig = field(default_factory=BookConfig)
    lob: LobFeatureConfig = field(default_factory=LobFeatureConfig)
    technical: TechnicalConfig = field(default_factory=TechnicalConfig)
    quant: QuantConfig = field(default_factory=QuantConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    seed: int = 42

    def __post_init__(self):
        if self.book.levels < 6:
            raise ConfigError("book.levels must be at least 6 (logistic feature reads six levels)")
        if self.book.block_size < 2:
            raise ConfigError("book.block_size must be at least 2")
        short = [name for name, n in self.technical.windows().items() if n < 1]
        if short:
            raise ConfigError(f"technical windows must be at least 1: {short}")
        if not 0.0 < self.selection.fit_fraction < 1.0:
            raise ConfigError("selection.fit_fraction must lie in (0, 1)")
        if self.protocol.gamma <= 0:
            raise ConfigError("protocol.gamma must be positive")
        if self.protocol.smoother not in ("ema", "centered"):
            raise ConfigError(f"Unknown smoother: {self.protocol.smoother}")
        if self.protocol.pool not in ("all", "lob", "technical", "quant"):
            raise ConfigError(f"Unknown feature pool: {self.protocol.pool}")


def _coerce(value, current):
    """Convert a TOML/env value to the type of the current default"""
    if isinstance(current, tuple):
        return tuple(value)
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.lower() == "true"
        return bool(value)
    if isinstance(current, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    return value


def _overlay(section, values: dict, section_name: str):
    known = {f.name: getattr(section, f.name) for f in fields(section)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"Unknown config key: {section_name}.{key}")
        updates[key] = _coerce(value, known[key]) if known[key] is not None else value
    return replace(section, **updates)


def _env_overrides() -> dict:
    """LOBFEAT_* variables mapped onto config sections"""
    mapping = {
        "LOBFEAT_LEVELS": ("book", "levels"),
        "LOBFEAT_GAMMA": ("protocol", "gamma"),
        "LOBFEAT_SMOOTHER": ("protocol", "smoother"),
        "LOBFEAT_POOL": ("protocol", "pool"),
        "LOBFEAT_WORKERS": ("protocol", "workers"),
        "LOBFEAT_SELECTION_WORKERS": ("selection", "workers"),
        "LOBFEAT_MAX_GREEDY_STEPS": ("selection", "max_greedy_steps"),
        "LOBFEAT_RBFN_PROTOTYPES": ("classifier", "rbfn_prototypes"),
        "LOBFEAT_HOST": ("server", "host"),
        "LOBFEAT_PORT": ("server", "port"),
        "LOBFEAT_LOG_LEVEL": ("server", "log_level"),
        "LOBFEAT_RUNS_DIR": ("server", "runs_dir"),
    }
    overrides: Dict[str, dict] = {}
    for env_name, (section, key) in mapping.items():
        raw = os.getenv(env_name)
        if raw is None:
            continue
        if key == "max_greedy_steps":
            raw = int(raw)
        overrides.setdefault(section, {})[key] = raw
    return overrides


def get_config(path: Optional[str] = None) -> LobfeatConfig:
    """Get configuration: defaults, then a TOML file, then environment variables"""
    load_dotenv()
    config = LobfeatConfig()
    layers = []

    if path:
        try:
            with open(path, "rb") as fh:
                layers.append(tomllib.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid config file {path}: {e}")
    layers.append(_env_overrides())

    for layer in layers:
        updates = {}
        for name, values in layer.items():
            if name == "seed":
                updates["seed"] = int(values)
                continue
            if not hasattr(config, name) or not isinstance(values, dict):
                raise ConfigError(f"Unknown config section: {name}")
            updates[name] = _overlay(getattr(config, name), values, name)
        config = replace(config, **updates)

    if os.getenv("LOBFEAT_SEED"):
        config = replace(config, seed=int(os.environ["LOBFEAT_SEED"]))
    return config


def with_seed(config: LobfeatConfig, seed: Optional[int]) -> LobfeatConfig:
    return config if seed is None else replace(config, seed=seed)


def load_critical_values(config: LobfeatConfig) -> Dict[str, Tuple[float, float, float]]:
    """Embedded ADF critical-value table, or the JSON override named in the config"""
    path = config.quant.critical_values_file
    if not path:
        return dict(ADF_CRITICAL_VALUES)
    try:
        table = json.loads(Path(path).read_text())
        return {level: tuple(float(c) for c in coeffs) for level, coeffs in table.items()}
    except (OSError, ValueError, TypeError) as e:
        raise ConfigError(f"Invalid critical-value table {path}: {e}")


def config_hash(config: LobfeatConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


# Default configuration
DEFAULT_CONFIG = LobfeatConfig()
