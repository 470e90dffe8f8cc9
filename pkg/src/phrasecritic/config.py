"""Run configuration: one JSON document mirroring :class:`RunConfig`.

Relative paths inside a config file are resolved against the file's
directory. Every field has a default, so ``{}`` is a valid config.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .critic import CriticDims, TrainConfig
from .errors import InvalidArgumentError
from .grounding import SyntheticConfig
from .negatives import FlipPolicy


class ConfigError(InvalidArgumentError):
    pass


@dataclass
class GrounderConfig:
    kind: str = "synthetic"  # "synthetic" | "file"
    path: str = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass
class DataPaths:
    images: str = None
    heldout_images: str = None
    candidates: str = None
    lexicon: str = None  # None -> bundled default


@dataclass
class OutputPaths:
    checkpoint: str = "critic.ckpt.json"
    history: str = "loss_history.jsonl"
    ranked: str = "ranked.jsonl"
    report: str = "report.json"


@dataclass
class RunConfig:
    seed: int = 0
    dims: CriticDims = field(default_factory=CriticDims)
    train: TrainConfig = field(default_factory=TrainConfig)
    flip_policy: FlipPolicy = field(default_factory=FlipPolicy)
    lam: float = 1.0
    length_normalize: bool = False
    dedupe_phrases: bool = True
    heldout_fraction: float = 0.2
    grounder: GrounderConfig = field(default_factory=GrounderConfig)
    data: DataPaths = field(default_factory=DataPaths)
    outputs: OutputPaths = field(default_factory=OutputPaths)

    def train_config(self):
        t = self.train
        return TrainConfig(t.margin, t.epochs, t.lr, self.seed, t.negatives_per_image,
                           self.flip_policy, t.patience)

    def to_dict(self):
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["train"].pop("seed")
        d["train"].pop("flip_policy")
        return d


def _build(cls, d, where):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    try:
        return cls(**d)
    except (TypeError, InvalidArgumentError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(d, base_dir=None):
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    d = dict(d)
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    known = {f.name for f in fields(RunConfig)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown top-level key(s): {sorted(extra)}")

    grounder = dict(d.get("grounder") or {})
    grounder["synthetic"] = _build(SyntheticConfig, grounder.get("synthetic"), "grounder.synthetic")
    train = dict(d.get("train") or {})
    for k in ("seed", "flip_policy"):
        if k in train:
            raise ConfigError(f"train.{k} is set at the top level")

    cfg = RunConfig(
        seed=d.get("seed", 0),
        dims=_build(CriticDims, d.get("dims"), "dims"),
        train=_build(TrainConfig, train, "train"),
        flip_policy=_build(FlipPolicy, d.get("flip_policy"), "flip_policy"),
        lam=d.get("lam", 1.0),
        length_normalize=d.get("length_normalize", False),
        dedupe_phrases=d.get("dedupe_phrases", True),
        heldout_fraction=d.get("heldout_fraction", 0.2),
        grounder=_build(GrounderConfig, grounder, "grounder"),
        data=_build(DataPaths, d.get("data"), "data"),
        outputs=_build(OutputPaths, d.get("outputs"), "outputs"),
    )
    if base_dir is not None:
        resolve_paths(cfg, Path(base_dir))
    validate(cfg)
    return cfg


def resolve_paths(cfg, base):
    def fix(p):
        return None if p is None else str(base / p)

    cfg.grounder.path = fix(cfg.grounder.path)
    for obj in (cfg.data, cfg.outputs):
        for f in fields(obj):
            setattr(obj, f.name, fix(getattr(obj, f.name)))


def validate(cfg):
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool) or cfg.seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {cfg.seed!r}")
    if not isinstance(cfg.lam, (int, float)) or cfg.lam < 0:
        raise ConfigError(f"lambda must be a nonnegative number, got {cfg.lam!r}")
    if not 0.0 <= cfg.heldout_fraction < 1.0:
        raise ConfigError(f"heldout_fraction must be in [0, 1), got {cfg.heldout_fraction}")
    if cfg.grounder.kind not in ("synthetic", "file"):
        raise ConfigError(f"grounder.kind must be 'synthetic' or 'file', got {cfg.grounder.kind!r}")
    if cfg.grounder.kind == "file" and not cfg.grounder.path:
        raise ConfigError("grounder.kind 'file' needs grounder.path")
    if cfg.grounder.kind == "synthetic" and cfg.grounder.synthetic.d_r != cfg.dims.d_r:
        raise ConfigError(f"synthetic grounder d_r {cfg.grounder.synthetic.d_r} != dims.d_r {cfg.dims.d_r}")
    return cfg


def load_config(path):
    if path is None:
        return validate(RunConfig())
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return config_from_dict(d, Path(path).parent)


def dump_config(cfg, path, relative_to=None):
    d = cfg.to_dict()
    if relative_to is not None:
        base = Path(relative_to).resolve()

        def rel(p):
            if p is None:
                return None
            try:
                return str(Path(p).resolve().relative_to(base))
            except ValueError:
                return p

        d["grounder"]["path"] = rel(d["grounder"]["path"])
        for section in ("data", "outputs"):
            d[section] = {k: rel(v) for k, v in d[section].items()}
    Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n", encoding="utf-8")
