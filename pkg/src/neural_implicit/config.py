"""Run configuration: one flat record shared by every CLI subcommand, read
from a ``key = value`` text file and overridden by flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InputError
from .network import MlpArchitecture, TrainConfig
from .render.march import Camera, MarchConfig
from .sampling import FULL_CANDIDATES, FULL_SUBSET, SamplingConfig

DEFAULT_SEED = 42


@dataclass
class RunConfig:
    # reproducibility and scale
    seed: int = field(default=DEFAULT_SEED, metadata={"help": "seed for every random stage"})
    scale: float = field(default=0.01, metadata={"help": "multiplier on the full 10M/1M candidate/subset counts"})
    # mesh
    padding: float = field(default=0.1, metadata={"help": "normalization padding inside the unit ball"})
    # signing
    accuracy_beta: float = field(default=2.0, metadata={"help": "fast winding number accuracy parameter"})
    expansion_order: int = field(default=2, metadata={"help": "far-field expansion order (0-3)"})
    # sampling
    candidates: int | None = field(default=None, metadata={"help": "candidate count n (default 10M x scale)"})
    subset: int | None = field(default=None, metadata={"help": "training-set size m (default 1M x scale)"})
    beta: float = field(default=30.0, metadata={"help": "importance falloff exp(-beta |sdf|)"})
    strategy: str = field(default="importance", metadata={"help": "importance|uniform|vertex_gaussian|surface_gaussian"})
    sigma: float | None = field(default=None, metadata={"help": "Gaussian sampler sigma"})
    bias: str = field(default="", metadata={"help": "bias points 'x,y,z,strength;...'"})
    # network and training
    hidden_layers: int = field(default=8, metadata={"help": "hidden layer count"})
    hidden_width: int = field(default=32, metadata={"help": "hidden layer width"})
    learning_rate: float = field(default=1e-4, metadata={"help": "Adam learning rate"})
    max_epochs: int = field(default=100, metadata={"help": "epoch limit"})
    batch_size: int = field(default=1024, metadata={"help": "mini-batch size"})
    patience: int = field(default=5, metadata={"help": "early-stopping patience (epochs)"})
    min_rel_improvement: float = field(default=1e-3, metadata={"help": "early-stopping relative threshold"})
    # evaluation
    surface_samples: int = field(default=100_000, metadata={"help": "surface samples for surface error"})
    grid_resolution: int = field(default=20, metadata={"help": "baseline grid resolution per axis"})
    target_error: float | None = field(default=None, metadata={"help": "surface error goal; exit 1 if missed"})
    # rendering
    eye: str = field(default="0,0,-2", metadata={"help": "camera position x,y,z"})
    look_at: str = field(default="0,0,0", metadata={"help": "camera target x,y,z"})
    up: str = field(default="0,1,0", metadata={"help": "camera up x,y,z"})
    fov: float = field(default=45.0, metadata={"help": "vertical field of view (degrees)"})
    width: int = field(default=256, metadata={"help": "image width"})
    height: int = field(default=256, metadata={"help": "image height"})
    epsilon: float = field(default=1e-3, metadata={"help": "marching hit threshold"})
    max_steps: int = field(default=200, metadata={"help": "marching step limit"})
    march_batch: int | None = field(default=None, metadata={"help": "rays per batch (default all active)"})
    relaxation: float = field(default=1.0, metadata={"help": "step scale for network leaves"})
    light: str = field(default="-1,1,-1", metadata={"help": "direction toward the light x,y,z"})
    # outputs and execution
    output: str | None = field(default=None, metadata={"help": "output file (convert/render/sample) or directory (batch)"})
    parallelism: int = field(default=1, metadata={"help": "batch worker processes"})
    figures: bool = field(default=True, metadata={"help": "write matplotlib figures next to reports"})
    verbose: bool = field(default=False, metadata={"help": "per-epoch log lines"})

    # ---- derived views -------------------------------------------------

    @property
    def candidate_count(self) -> int:
        return self.candidates if self.candidates is not None else max(1, round(FULL_CANDIDATES * self.scale))

    @property
    def subset_count(self) -> int:
        return self.subset if self.subset is not None else max(1, round(FULL_SUBSET * self.scale))

    def sampling(self) -> SamplingConfig:
        return SamplingConfig(
            candidate_count=self.candidate_count,
            subset_count=self.subset_count,
            beta=self.beta,
            strategy=self.strategy,
            sigma=self.sigma,
            bias_points=parse_bias(self.bias),
            seed=self.seed,
        )

    def architecture(self) -> MlpArchitecture:
        return MlpArchitecture(self.hidden_layers, self.hidden_width)

    def training(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            min_rel_improvement=self.min_rel_improvement,
            seed=self.seed,
        )

    def camera(self) -> Camera:
        return Camera(_vec(self.eye), _vec(self.look_at), _vec(self.up), self.fov, self.width, self.height)

    def march(self) -> MarchConfig:
        return MarchConfig(epsilon=self.epsilon, max_steps=self.max_steps, batch_size=self.march_batch)

    def light_direction(self) -> tuple:
        return _vec(self.light)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _vec(text: str) -> tuple:
    try:
        v = tuple(float(s) for s in str(text).split(","))
    except ValueError:
        raise InputError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(v) != 3:
        raise InputError(f"expected three comma-separated numbers, got {text!r}")
    return v


def parse_bias(text: str) -> tuple:
    out = []
    for chunk in filter(None, (c.strip() for c in str(text).split(";"))):
        try:
            x, y, z, s = (float(v) for v in chunk.split(","))
        except ValueError:
            raise InputError(f"bias point must be 'x,y,z,strength', got {chunk!r}") from None
        out.append(((x, y, z), s))
    return tuple(out)


def _coerce(f: dataclasses.Field, raw: str):
    text = raw.strip()
    kind = str(f.type)
    if text.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise InputError(f"config key {f.name!r}: cannot parse {raw!r} as {kind}") from None
    return text


FIELDS = {f.name: f for f in fields(RunConfig)}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in FIELDS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(FIELDS[key], value)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{p}: config file not found")
    return parse_config_text(p.read_text())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
