"""Single-document pipeline configuration.

The on-disk format is a plain-text key/value file with section headers (INI),
one file per experiment. Every module-level knob lives here; validation
cross-checks values against the owning modules' preconditions and returns
actionable messages instead of raising.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import asdict, dataclass, field

from .cnn.training import TrainConfig
from .errors import ConfigError
from .forward_model import DEFAULT_PIXEL_SIZE_UM
from .patch_extraction import ExtractionConfig


@dataclass
class SynthConfig:
    train_subjects_per_class: int = 2
    val_subjects_per_class: int = 1
    test_subjects_per_class: int = 1
    fovs_per_subject: int = 1
    cells_per_fov: int = 3
    fov_rows: int = 512
    fov_cols: int = 512
    cell_radius_um: float = 7.5
    opd_peak_um: float = 0.15
    pixel_size_um: float = DEFAULT_PIXEL_SIZE_UM
    carrier_fx: float = 13 / 64    # 0.203125: integer FFT bins on canvases
    carrier_fy: float = 13 / 256   # divisible by 256 (see forward_model)
    background: float = 100.0
    modulation: float = 0.3
    noise_sigma: float = 0.1
    inclusion_count: int = 3
    pigment_fraction: float = 0.3

    @property
    def subjects_per_class(self) -> int:
        return (self.train_subjects_per_class + self.val_subjects_per_class
                + self.test_subjects_per_class)


@dataclass
class RetrieveConfig:
    filter_radius_bins: float = 0.0  # 0 = auto (half the peak-to-DC distance)
    plane_fit: bool = True
    window: bool = False


@dataclass
class DatasetConfig:
    per_class: int = 0  # 0 = auto (smallest class count)
    channels_as_samples: bool = False
    augment_val: bool = False


@dataclass
class EvalConfig:
    threshold: float = 0.5


@dataclass
class PipelineConfig:
    root_seed: int = 1234
    deterministic: bool = True
    tasks: tuple = ("hvi", "evl")
    synth: SynthConfig = field(default_factory=SynthConfig)
    retrieve: RetrieveConfig = field(default_factory=RetrieveConfig)
    extract: ExtractionConfig = field(default_factory=ExtractionConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()


_SECTIONS = {
    "synth": SynthConfig,
    "retrieve": RetrieveConfig,
    "extract": ExtractionConfig,
    "dataset": DatasetConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


def dumps(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser()
    parser["pipeline"] = {
        "root_seed": str(cfg.root_seed),
        "deterministic": str(cfg.deterministic).lower(),
        "tasks": ",".join(cfg.tasks),
    }
    for section, _ in _SECTIONS.items():
        parser[section] = {k: str(v).lower() if isinstance(v, bool) else str(v)
                           for k, v in asdict(getattr(cfg, section)).items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _coerce(kind, raw: str):
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    return kind(raw)


def loads(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    cfg = PipelineConfig()
    if parser.has_section("pipeline"):
        sec = parser["pipeline"]
        cfg.root_seed = int(sec.get("root_seed", cfg.root_seed))
        cfg.deterministic = _coerce(bool, sec.get("deterministic", "true"))
        if "tasks" in sec:
            cfg.tasks = tuple(t.strip() for t in sec["tasks"].split(",") if t.strip())
    for section, klass in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        defaults = asdict(getattr(cfg, section))
        values = dict(defaults)
        for key, raw in parser[section].items():
            if key not in values:
                raise ConfigError(f"[{section}] has no option {key!r}")
            values[key] = _coerce(type(defaults[key]), raw)
        try:
            setattr(cfg, section, klass(**values))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from exc
    return cfg


def load(path) -> PipelineConfig:
    with open(path) as fh:
        return loads(fh.read())


def save(cfg: PipelineConfig, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def validate_config(cfg: PipelineConfig) -> list:
    """Cross-check the document against module preconditions.

    Returns a list of violation messages; empty means ok.
    """
    out = []
    s = cfg.synth
    if abs(s.carrier_fx) >= 0.5 or abs(s.carrier_fy) >= 0.5:
        out.append(f"[synth] carrier ({s.carrier_fx}, {s.carrier_fy}) reaches Nyquist (0.5 cycles/px)")
    if s.carrier_fx == 0 and s.carrier_fy == 0:
        out.append("[synth] carrier must be nonzero in at least one axis")
    if not 0.0 < s.modulation <= 1.0:
        out.append(f"[synth] modulation must be in (0, 1], got {s.modulation}")
    if s.background <= 0:
        out.append(f"[synth] background must be > 0, got {s.background}")
    if s.noise_sigma < 0:
        out.append(f"[synth] noise sigma must be >= 0, got {s.noise_sigma}")
    if min(s.train_subjects_per_class, s.val_subjects_per_class) < 1:
        out.append("[synth] need at least one train and one val subject per class")

    peak_dist = math.hypot(s.carrier_fx * s.fov_cols, s.carrier_fy * s.fov_rows)
    radius = cfg.retrieve.filter_radius_bins
    if radius:
        if radius < 2:
            out.append(f"[retrieve] filter radius must be >= 2 bins, got {radius}")
        if radius >= peak_dist:
            out.append(f"[retrieve] filter radius {radius} bins overlaps DC: the first-order "
                       f"peak sits only {peak_dist:.1f} bins away")

    e = cfg.extract
    if e.threshold <= 0:
        out.append(f"[extract] entropy threshold must be > 0, got {e.threshold}")
    if e.window_px % 2 == 0 or e.window_px < 3:
        out.append(f"[extract] entropy window must be odd and >= 3, got {e.window_px}")
    if e.bin_count < 2:
        out.append(f"[extract] bin count must be >= 2, got {e.bin_count}")
    cell_area_px = math.pi * (s.cell_radius_um / s.pixel_size_um) ** 2
    if cell_area_px < e.min_area:
        out.append(f"[extract] min area {e.min_area} px exceeds the configured cell area "
                   f"(~{cell_area_px:.0f} px); every cell would be rejected")

    try:
        TrainConfig(**asdict(cfg.train))
    except ValueError as exc:
        out.append(f"[train] {exc}")
    est_train = (s.train_subjects_per_class * 3 * s.fovs_per_subject * s.cells_per_fov)
    if cfg.train.batch_size > max(est_train, 1):
        out.append(f"[train] batch size {cfg.train.batch_size} exceeds the expected "
                   f"train-split size (~{est_train} patches)")
    for task in cfg.tasks:
        if task not in ("hvi", "evl"):
            out.append(f"[pipeline] unknown task {task!r}")
    if not 0.0 < cfg.eval.threshold < 1.0:
        out.append(f"[eval] operating threshold must be in (0, 1), got {cfg.eval.threshold}")
    return out
