"""Declarative experiment configuration stored as sectioned ``key = value`` text."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .errors import InvalidArgument

COMMANDS = ("slice", "sweep-T", "policy-landscape", "termination", "opt-compare",
            "theory", "hessian-report")


def _ints(text: str) -> list[int]:
    return [int(t) for t in _split(text)]


def _floats(text: str) -> list[float]:
    return [float(t) for t in _split(text)]


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _fmt(value) -> str:
    if isinstance(value, list):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "str": str.strip, "int": int, "float": float, "bool": _bool,
    "ints": _ints, "floats": _floats, "strs": _split,
}


def _field(section: str, kind: str, default):
    factory = (lambda: list(default)) if isinstance(default, list) else None
    meta = {"section": section, "kind": kind}
    if factory is not None:
        return field(default_factory=factory, metadata=meta)
    return field(default=default, metadata=meta)


@dataclass
class ExperimentConfig:
    """Every knob an experiment needs; each field lives in one INI section."""

    # [experiment]
    name: str = _field("experiment", "str", "experiment")
    command: str = _field("experiment", "str", "slice")
    seed: int = _field("experiment", "int", 0)
    output_dir: str = _field("experiment", "str", "")
    # [task]
    T: list = _field("task", "ints", [100])
    w: float = _field("task", "float", 1.0)
    action_space: list = _field("task", "strs", ["torque"])
    objective: list = _field("task", "strs", ["cost"])
    termination: list = _field("task", "strs", ["none"])
    spline_spacing: int = _field("task", "int", 10)
    threshold: float = _field("task", "float", 2.0)
    alive_bonus: float = _field("task", "float", 1.0)
    penalty_per_step: float = _field("task", "float", 4.0)
    # [slice]
    extent: float = _field("slice", "float", 1.0)
    resolution: int = _field("slice", "int", 100)
    episodes: int = _field("slice", "int", 10)
    sigma: float = _field("slice", "float", 1.0)
    basis: str = _field("slice", "str", "orthonormal")
    bases: int = _field("slice", "int", 4)
    # [optimizer]
    population: int = _field("optimizer", "int", 100)
    sigma0: float = _field("optimizer", "float", 0.5)
    max_evals: int = _field("optimizer", "int", 50000)
    runs: int = _field("optimizer", "int", 10)
    init_scale: float = _field("optimizer", "float", 1.0)
    variants: list = _field("optimizer", "strs", ["torque-cost", "angle-cost"])
    # [policy]
    theta_min: float = _field("policy", "float", -1.0)
    theta_max: float = _field("policy", "float", 1.0)
    theta_step: float = _field("policy", "float", 0.01)
    w_values: list = _field("policy", "floats", [1.0])
    # [theory]
    dims: list = _field("theory", "ints", [10])
    ks: list = _field("theory", "ints", [1, 5, 10])
    eps: float = _field("theory", "float", 0.0)
    n_bases: int = _field("theory", "int", 200)
    bimodal_dims: list = _field("theory", "ints", [2, 20])
    theory_extent: float = _field("theory", "float", 2.0)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InvalidArgument(f"unknown command {self.command!r}")
        if not self.T or any(t < 1 for t in self.T):
            raise InvalidArgument("T list must be nonempty with positive entries")
        for name in ("resolution", "episodes", "bases", "population", "max_evals", "runs",
                     "n_bases", "spline_spacing"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be positive")
        if self.resolution < 2:
            raise InvalidArgument("resolution must be at least 2")
        for name in ("extent", "sigma0", "theta_step", "init_scale", "theory_extent"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")
        if self.sigma < 0:
            raise InvalidArgument("sigma must be nonnegative (0 disables blurring)")
        if self.theta_max < self.theta_min:
            raise InvalidArgument("theta_max must not be below theta_min")
        if not (self.action_space and self.objective and self.termination):
            raise InvalidArgument("action_space, objective and termination lists must be nonempty")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidArgument(f"malformed config: {exc}") from None
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                spec = known.get(key)
                if spec is None or spec.metadata["section"] != section:
                    raise InvalidArgument(f"unknown config key [{section}] {key}")
                try:
                    values[key] = _PARSERS[spec.metadata["kind"]](raw)
                except ValueError as exc:
                    raise InvalidArgument(f"bad value for [{section}] {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidArgument(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def to_text(self) -> str:
        sections: dict[str, list[str]] = {}
        for f in dataclasses.fields(self):
            sections.setdefault(f.metadata["section"], []).append(
                f"{f.name} = {_fmt(getattr(self, f.name))}")
        return "\n\n".join(f"[{name}]\n" + "\n".join(lines) for name, lines in sections.items()) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)
