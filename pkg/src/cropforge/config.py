"""Run configuration: defaults, ``key = value`` files and environment overrides."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .errors import ParameterError

SEED_ENV = "CROPFORGE_SEED"


@dataclass(frozen=True)
class RunConfig:
    sigma: float = 0.01
    gamma: float = 3.0
    lam: float = 1.0
    target_size: int = 224
    depth: int = 3
    base_channels: int = 8
    roi_grid: int = 4
    hidden: str = "2048,1024"
    schedule: str = "standard"
    lr1: float | None = None
    lr2: float | None = None
    lr3: float | None = None
    epochs1: int | None = None
    epochs2: int | None = None
    epochs3: int | None = None
    max_grad_norm: float | None = 1000.0
    gt_mode: str = "crop-box"
    anchor_source: str = "predicted"
    seed: int = 0

    def __post_init__(self):
        if self.schedule not in ("standard", "toy"):
            raise ParameterError(f"schedule must be 'standard' or 'toy', got {self.schedule!r}")
        if not self.sigma > 0 or not self.gamma > 0 or not self.lam >= 0:
            raise ParameterError("sigma and gamma must be positive and lam non-negative")

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(v) for v in self.hidden.split(",") if v.strip())

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        return base.updated(parse_key_values(text))

    @classmethod
    def from_file(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read(), base)

    def updated(self, values: dict) -> "RunConfig":
        """Copy with string or typed ``values`` coerced to each field's type; ``None`` values are skipped."""
        known = {f.name: f for f in fields(self)}
        changes = {}
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in known:
                raise ParameterError(f"unknown config key {key!r}")
            changes[key] = _coerce(key, raw, known[key].type)
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _coerce(key, raw, annotation):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    ann = str(annotation)
    if text.lower() == "none":
        if "None" not in ann:
            raise ParameterError(f"config key {key!r} cannot be none")
        return None
    try:
        if ann.startswith("int"):
            return int(text)
        if ann.startswith("float"):
            return float(text)
    except ValueError:
        raise ParameterError(f"config key {key!r}: cannot parse {text!r}") from None
    return text


def default_config() -> RunConfig:
    """Defaults, with the seed taken from ``CROPFORGE_SEED`` when set."""
    seed = os.environ.get(SEED_ENV)
    if seed is None:
        return RunConfig()
    try:
        return RunConfig(seed=int(seed))
    except ValueError:
        raise ParameterError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
