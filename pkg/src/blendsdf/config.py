"""Run configuration: one JSON document, six sections, strict keys.

Unknown keys anywhere in the document are rejected by name (exit code 2 at
the CLI). Defaults are desk-scale: 2000 steps, 4096-ray batches, an 8-level
pyramid capped at resolution 256, and narrow (32-wide) MLPs so a full run
fits a CPU budget. Paper-scale values (15 levels to 4096, 256-wide MLPs,
2^14-ray batches) are plain config settings away.

The fully-resolved document is written to every output directory as
config.resolved.json; that file reproduces the run byte-for-byte on the
same build.
"""

import json
from dataclasses import asdict, dataclass, field, fields as _dc_fields


class ConfigError(ValueError):
    """Invalid configuration document (maps to exit code 2)."""


@dataclass
class DatasetConfig:
    path: str = ""
    scene_mode: str = "auto"  # auto | object | unbounded
    background: object = "auto"  # "auto" (env map if known, else grey), or [r,g,b]
    near: float = 0.0  # 0 -> take from dataset metadata
    far: float = 0.0


@dataclass
class ModelConfig:
    mode: str = "unified"  # unified | camv | refv | dualdirv
    levels: int = 8
    base_res: int = 32
    max_res: int = 256
    channels: int = 4
    table_size: int = 2**19
    l_init: int = 4
    unlock_frac: float = 0.02
    coarse_to_fine: bool = True
    sdf_hidden: int = 32
    sdf_depth: int = 2
    bottleneck: int = 32
    radiance_hidden: int = 32
    radiance_depth: int = 4
    weight_hidden: int = 32
    dir_degree: int = 4
    beta_init: float = 0.1
    init_radius: float = 0.5
    use_predicted_normal: bool = False


@dataclass
class SamplingConfig:
    counts: object = None  # None -> (64,32,32) object / (64,64,32) unbounded
    spacing: str = "auto"  # auto | linear | inverse
    resample_padding: float = 0.01


@dataclass
class LossConfig:
    eikonal: float = 1e-4
    smoothness: float = 1e-3
    orientation: float = 1e-3
    grid: float = 0.1
    proposal: float = 1.0


@dataclass
class TrainerConfig:
    steps: int = 2000
    batch: int = 4096
    grad_chunk: int = 1024  # rays per tape; gradients accumulate across chunks
    lr_hi: float = 5e-3
    lr_lo: float = 5e-4
    warmup_frac: float = 0.02
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-6
    seed: int = 0
    checkpoint_every: int = 0  # 0 -> final checkpoint only
    validate_frac: float = 0.1
    holdout_view: int = -1  # -1 -> last view; excluded from training batches


@dataclass
class EvalConfig:
    mesh_res: int = 128
    mesh_bound: float = 0.0  # 0 -> auto (object box vs contracted ball)
    chamfer_samples: int = 100000
    metrics: list = field(default_factory=lambda: ["psnr", "chamfer", "normal_mae"])


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_MODES = ("unified", "camv", "refv", "dualdirv")
_SCENE_MODES = ("auto", "object", "unbounded")
_SPACINGS = ("auto", "linear", "inverse")


def _build(cls, doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'}: expected a JSON object")
    known = {f.name for f in _dc_fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config key: {path + '.' if path else ''}{key}")
    return cls(**doc)


def _from_doc(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config root: expected a JSON object")
    section_types = {f.name: f.default_factory for f in _dc_fields(RunConfig)}
    for key in doc:
        if key not in section_types:
            raise ConfigError(f"unknown config key: {key}")
    cfg = RunConfig()
    for name, factory in section_types.items():
        if name in doc:
            setattr(cfg, name, _build(type(factory()), doc[name], name))
    return cfg


def validate(cfg):
    m = cfg.model
    t = cfg.trainer
    if m.mode not in _MODES:
        raise ConfigError(f"model.mode must be one of {_MODES}, got {m.mode!r}")
    if cfg.dataset.scene_mode not in _SCENE_MODES:
        raise ConfigError(f"dataset.scene_mode must be one of {_SCENE_MODES}")
    if cfg.sampling.spacing not in _SPACINGS:
        raise ConfigError(f"sampling.spacing must be one of {_SPACINGS}")
    if cfg.sampling.counts is not None:
        c = cfg.sampling.counts
        if not (isinstance(c, (list, tuple)) and len(c) == 3 and all(int(x) > 0 for x in c)):
            raise ConfigError("sampling.counts must be three positive integers")
    if t.batch < 1:
        raise ConfigError("trainer.batch must be >= 1")
    if t.grad_chunk < 1:
        raise ConfigError("trainer.grad_chunk must be >= 1")
    if not (0.0 <= t.warmup_frac < 1.0):
        raise ConfigError("trainer.warmup_frac must be in [0, 1)")
    if not (t.lr_hi > t.lr_lo > 0.0):
        raise ConfigError("trainer.lr_hi > trainer.lr_lo > 0 required")
    if t.steps < 0:
        raise ConfigError("trainer.steps must be >= 0")
    if m.levels < 1 or m.l_init < 1:
        raise ConfigError("model.levels and model.l_init must be >= 1")
    bg = cfg.dataset.background
    if bg != "auto" and not (isinstance(bg, (list, tuple)) and len(bg) == 3):
        raise ConfigError("dataset.background must be \"auto\" or [r, g, b]")
    return cfg


def from_dict(doc):
    return validate(_from_doc(doc))


def load_config(path=None, overrides=None):
    """Read a config file (optional) and apply {section: {key: value}} overrides."""
    doc = {}
    if path is not None:
        with open(path) as f:
            try:
                doc = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if overrides:
        for section, vals in overrides.items():
            doc.setdefault(section, {}).update(vals)
    return from_dict(doc)


def to_dict(cfg):
    return asdict(cfg)


def save_resolved(cfg, path):
    """Write the fully-defaulted document (provenance record)."""
    with open(path, "w") as f:
        json.dump(to_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")


def resolve_scene_mode(cfg, dataset=None):
    """Explicit config wins; "auto" defers to the dataset's metadata."""
    mode = cfg.dataset.scene_mode
    if mode != "auto":
        return mode
    if dataset is None:
        raise ConfigError("scene_mode is 'auto' but no dataset is available")
    return dataset.scene_mode


def resolve_counts(cfg, scene_mode):
    if cfg.sampling.counts is not None:
        return tuple(int(x) for x in cfg.sampling.counts)
    return (64, 32, 32) if scene_mode == "object" else (64, 64, 32)


def resolve_spacing(cfg, scene_mode):
    if cfg.sampling.spacing != "auto":
        return cfg.sampling.spacing
    return "linear" if scene_mode == "object" else "inverse"
