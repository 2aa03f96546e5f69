"""Run configuration shared by the command line and the acceptance suite."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .algebra import Group, load_group, parse_quadratic
from .geometry import Tiling, compute_exterior, tile
from .symdyn import Combinatorics, SymbolSystem, build_components, resolve_choices
from .transfer import TransferOperator, build_operator

BUILTIN_GROUPS = ("example", "psl2z", "hecke5", "lambda17")


def group_path(name_or_path: str) -> Path:
    """A bundled fixture by name, otherwise a filesystem path."""
    if name_or_path in BUILTIN_GROUPS:
        return Path(str(resources.files("maassdyn") / "data" / f"{name_or_path}.yaml"))
    p = Path(name_or_path)
    if not p.exists():
        raise FileNotFoundError(f"group file {name_or_path!r} not found")
    return p


@dataclass
class RunConfig:
    """Everything that determines a run.

    ``generators`` are cell:element picks (``"A2:g"``), ``shifts`` map
    cell:element to integer translations.  A named preset from the group
    file is applied first and explicit values override it.
    """

    group: str = "example"
    preset: str | None = None
    strip_base: str | None = None
    generators: list[str] = field(default_factory=list)
    shifts: dict[str, int] = field(default_factory=dict)
    word_bound: int = 4
    order: int = 32
    kappa: float | None = None
    t0: float = 9.0
    t1: float = 10.0
    step: float = 0.01
    tol: float = 1e-6
    out: str | None = None

    def resolved(self, grp: Group) -> "RunConfig":
        if self.preset is None:
            return self
        if self.preset not in grp.presets:
            raise KeyError(f"group {grp.name!r} has no preset {self.preset!r}")
        p = grp.presets[self.preset]
        shifts = dict(p.get("shifts") or {})
        shifts.update(self.shifts)
        return RunConfig(
            **{
                **asdict(self),
                "preset": None,
                "strip_base": self.strip_base if self.strip_base is not None else p.get("strip_base"),
                "generators": list(self.generators) or list(p.get("generators") or []),
                "shifts": shifts,
            }
        )

    def digest(self) -> str:
        """Hash of the configuration and the group file contents."""
        body = asdict(self)
        body.pop("out")
        body["group_sha256"] = hashlib.sha256(group_path(self.group).read_bytes()).hexdigest()
        raw = json.dumps(body, sort_keys=True, default=str).encode()
        return hashlib.sha256(raw).hexdigest()[:16]

    def header(self) -> dict:
        # the output location must not change file contents
        cfg = asdict(self)
        cfg.pop("out")
        return {"tool": "maassdyn", "version": __version__, "config_hash": self.digest(), "config": cfg}


@dataclass
class Pipeline:
    config: RunConfig
    group: Group
    tiling: Tiling
    comb: Combinatorics
    system: SymbolSystem
    op: TransferOperator


def load(config: RunConfig) -> Group:
    return load_group(group_path(config.group))


def build_tiling(config: RunConfig, group: Group | None = None) -> Tiling:
    grp = group or load(config)
    cfg = config.resolved(grp)
    base = parse_quadratic(cfg.strip_base, grp.field_d) if cfg.strip_base is not None else None
    return tile(compute_exterior(grp, strip_base=base, word_bound=cfg.word_bound))


def build(config: RunConfig) -> Pipeline:
    grp = load(config)
    cfg = config.resolved(grp)
    til = build_tiling(cfg, grp)
    comb = Combinatorics(til)
    system = build_components(resolve_choices(comb, cfg.generators, cfg.shifts), comb)
    return Pipeline(cfg, grp, til, comb, system, build_operator(system))
