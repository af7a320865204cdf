import os
import logging
import dataclasses
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv, dotenv_values

from src.errors import ConfigError

load_dotenv()

AGGREGATION_MODES = ('gap', 'conv', 'depthwise')
RENDER_RESOLUTIONS = (1, 2, 4, 6)


class Config:
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    DATA_DIR = os.getenv('HMR_DATA_DIR', 'data')
    ASSET_PATH = os.getenv('HMR_ASSET_PATH', os.path.join(DATA_DIR, 'toy_body.npz'))

    @classmethod
    def validate(cls):
        """Validate process-level configuration"""
        if not hasattr(logging, cls.LOG_LEVEL.upper()):
            raise ConfigError(f"LOG_LEVEL must be a logging level name, got {cls.LOG_LEVEL!r}")

    @classmethod
    def setup_logging(cls):
        """Setup logging configuration"""
        logging.basicConfig(
            level=getattr(logging, cls.LOG_LEVEL.upper()),
            format=cls.LOG_FORMAT
        )


@dataclass(frozen=True)
class RunConfig:
    """Every hyperparameter of a run. Loaded from a KEY=value file, see docs/CONFIG_SCHEMA.md"""

    seed: int = 0

    # image and encoder
    image_size: int = 64
    channels: int = 128

    # feature field and volume rendering
    field_width: int = 128
    field_depth: int = 4
    n_samples: int = 32
    feature_map_res: int = 4
    octaves_x: int = 10
    octaves_r: int = 4
    aggregation: str = 'depthwise'
    attention: bool = True
    feature_field: bool = True

    # orbit camera
    orbit_radius: float = 2.5
    near: float = 1.3
    far: float = 3.7
    bound_radius: float = 1.2

    # regressor
    regressor_iters: int = 3
    regressor_hidden: int = 256

    # loss weights and term switches
    lambda_2d: float = 300.0
    lambda_3d: float = 300.0
    lambda_pose: float = 60.0
    lambda_shape: float = 0.06
    lambda_silh: float = 30.0
    use_imagination: bool = True
    use_consistency: bool = True

    # optimisation
    learning_rate: float = 5e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 16
    epochs: int = 20
    grad_clip: float = 0.0
    checkpoint_every_epoch: bool = True

    # inference benchmark
    bench_warmup: int = 50
    bench_iters: int = 10000

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Check every field; raises ConfigError naming the first bad key"""
        checks = [
            (self.image_size >= 16, 'image_size must be >= 16'),
            (self.channels >= 1, 'channels must be >= 1'),
            (self.field_width >= 1, 'field_width must be >= 1'),
            (self.field_depth >= 1, 'field_depth must be >= 1'),
            (self.n_samples >= 2, 'n_samples must be >= 2'),
            (self.feature_map_res in RENDER_RESOLUTIONS,
             f'feature_map_res must be one of {RENDER_RESOLUTIONS}'),
            (self.octaves_x >= 0 and self.octaves_r >= 0, 'octaves must be >= 0'),
            (self.aggregation in AGGREGATION_MODES,
             f'aggregation must be one of {AGGREGATION_MODES}'),
            (self.feature_field or not (self.use_imagination or self.use_consistency),
             'feature_field=false needs use_imagination and use_consistency off'),
            (self.orbit_radius > self.bound_radius > 0,
             'orbit_radius must exceed bound_radius > 0'),
            (self.far > self.near > 0, 'far must exceed near > 0'),
            (1 <= self.regressor_iters <= 3, 'regressor_iters must be in [1, 3]'),
            (self.regressor_hidden >= 1, 'regressor_hidden must be >= 1'),
            (min(self.lambda_2d, self.lambda_3d, self.lambda_pose,
                 self.lambda_shape, self.lambda_silh) >= 0, 'loss weights must be >= 0'),
            (self.learning_rate > 0, 'learning_rate must be > 0'),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, 'adam betas must be in [0, 1)'),
            (self.batch_size >= 1, 'batch_size must be >= 1'),
            (self.epochs >= 0, 'epochs must be >= 0'),
            (self.grad_clip >= 0, 'grad_clip must be >= 0'),
            (self.bench_warmup >= 0 and self.bench_iters >= 1, 'bench counts must be positive'),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @classmethod
    def from_mapping(cls, values: Dict[str, Any]) -> 'RunConfig':
        """Build from a str->value mapping, coercing strings to field types"""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for raw_key, raw_value in values.items():
            key = raw_key.strip().lower()
            if key not in types:
                raise ConfigError(f"Unknown config key: {raw_key}")
            kwargs[key] = _coerce(key, raw_value, types[key])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'RunConfig':
        """Load a KEY=value config file"""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {path}")
        values = dotenv_values(path)
        missing = [key for key, value in values.items() if value is None]
        if missing:
            raise ConfigError(f"Config keys without a value: {missing}")
        return cls.from_mapping(values)

    def to_file(self, path: Union[str, Path]) -> Path:
        """Write the config in the same KEY=value format it is read from"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key.upper()}={_format(value)}" for key, value in asdict(self).items()]
        path.write_text('\n'.join(lines) + '\n')
        return path

    def with_overrides(self, **overrides) -> 'RunConfig':
        """Validated copy with some fields replaced; None values are ignored"""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        values = {**asdict(self), **overrides}
        return RunConfig.from_mapping(values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def load_run_config(path: Optional[Union[str, Path]] = None, seed: Optional[int] = None) -> RunConfig:
    """Config file (or defaults) with the CLI seed applied on top"""
    config = RunConfig.from_file(path) if path else RunConfig()
    return config.with_overrides(seed=seed)


def _coerce(key: str, value: Any, kind: Any) -> Any:
    kind_name = kind if isinstance(kind, str) else kind.__name__
    if not isinstance(value, str):
        if kind_name == 'float' and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value

    text = value.strip()
    try:
        if kind_name == 'bool':
            lowered = text.lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(text)
        if kind_name == 'int':
            return int(text)
        if kind_name == 'float':
            return float(text)
    except ValueError:
        raise ConfigError(f"Config key {key} expects {kind_name}, got {text!r}")
    return text.lower() if key == 'aggregation' else text


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)
