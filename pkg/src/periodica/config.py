"""Pipeline configuration: INI file plus command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .imputer import EmConfig
from .missingness import MarSpec
from .smoothing import LoessParams
from .vbpbb import DEFAULT_COMPONENTS, ComponentSpec

__all__ = ["PipelineConfig", "load_config", "stage_seed"]

MODES = ("enhanced", "baseline", "both")


@dataclass(frozen=True)
class PipelineConfig:
    input_path: Optional[Path] = None
    date_column: str = "date"
    value_column: str = "value"
    out_dir: Path = Path("periodica-out")
    seed: int = 0
    mode: str = "both"
    # None disables masking: the input's own gaps are imputed and ``truth_path`` scores them
    mar: Optional[MarSpec] = MarSpec()
    truth_path: Optional[Path] = None
    components: tuple[ComponentSpec, ...] = DEFAULT_COMPONENTS
    replicates: int = 200
    ci_level: float = 0.95
    demean: bool = True
    per_harmonic: bool = False
    imputations: int = 5
    em: EmConfig = EmConfig()
    loess: LoessParams = LoessParams()
    ma_window: int = 29

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replicates < 2:
            raise ConfigError("replicates must be >= 2")
        if self.imputations < 1:
            raise ConfigError("imputations must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.ma_window < 1 or self.ma_window % 2 == 0:
            raise ConfigError("ma_window must be odd and positive")

    @property
    def modes(self) -> tuple[str, ...]:
        return ("enhanced", "baseline") if self.mode == "both" else (self.mode,)

    def check_paths(self):
        for p in (self.input_path, self.truth_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"path does not exist: {p}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("input_path", "out_dir", "truth_path"):
            d[key] = None if d[key] is None else str(d[key])
        d["components"] = [
            {**asdict(c), "harmonics": list(c.harmonics)} for c in self.components
        ]
        return d


def stage_seed(seed: int, stage: int) -> int:
    """Independent 32-bit seed for pipeline stage ``stage``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(stage),)).generate_state(1)[0])


def _harmonics(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in text.replace(" ", "").split(","):
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def load_config(path: Optional[str | Path] = None, **overrides) -> PipelineConfig:
    """Read an INI config and apply keyword overrides (``None`` values ignored)."""
    cfg = PipelineConfig()
    if path is not None:
        cfg = _from_ini(Path(path), cfg)
    updates = {k: v for k, v in overrides.items() if v is not None}
    if "input_path" in updates:
        updates["input_path"] = Path(updates["input_path"])
    if "out_dir" in updates:
        updates["out_dir"] = Path(updates["out_dir"])
    if "truth_path" in updates:
        updates["truth_path"] = Path(updates["truth_path"])
    try:
        return replace(cfg, **updates)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _from_ini(path: Path, cfg: PipelineConfig) -> PipelineConfig:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    ini = configparser.ConfigParser()
    try:
        ini.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    base = path.parent
    kw: dict = {}
    try:
        if ini.has_section("input"):
            s = ini["input"]
            if "path" in s:
                kw["input_path"] = base / s["path"]
            kw["date_column"] = s.get("date_column", cfg.date_column)
            kw["value_column"] = s.get("value_column", cfg.value_column)
        if ini.has_section("run"):
            s = ini["run"]
            kw["seed"] = s.getint("seed", cfg.seed)
            kw["mode"] = s.get("mode", cfg.mode)
            if "out" in s:
                kw["out_dir"] = base / s["out"]
        if ini.has_section("missingness"):
            s = ini["missingness"]
            if s.getboolean("enabled", True):
                kw["mar"] = MarSpec(
                    s.getfloat("total_rate", 0.13), s.getfloat("weekend_share", 0.60), 0
                )
            else:
                kw["mar"] = None
        if ini.has_section("evaluation") and "truth" in ini["evaluation"]:
            kw["truth_path"] = base / ini["evaluation"]["truth"]
        if ini.has_section("bootstrap"):
            s = ini["bootstrap"]
            kw["replicates"] = s.getint("replicates", cfg.replicates)
            kw["ci_level"] = s.getfloat("ci_level", cfg.ci_level)
            kw["demean"] = s.getboolean("demean", cfg.demean)
            kw["per_harmonic"] = s.getboolean("per_harmonic", cfg.per_harmonic)
        if ini.has_section("imputation"):
            s = ini["imputation"]
            kw["imputations"] = s.getint("imputations", cfg.imputations)
            kw["em"] = EmConfig(
                s.getfloat("tol", cfg.em.tol),
                s.getint("max_iter", cfg.em.max_iter),
                s.getfloat("ridge", cfg.em.ridge),
            )
        if ini.has_section("smoothing"):
            s = ini["smoothing"]
            kw["loess"] = LoessParams(
                s.getfloat("loess_span", cfg.loess.span), s.getint("loess_degree", cfg.loess.degree)
            )
            kw["ma_window"] = s.getint("ma_window", cfg.ma_window)
        comps = []
        for name in ini.sections():
            if name.startswith("component:"):
                s = ini[name]
                comps.append(
                    ComponentSpec(
                        name.split(":", 1)[1].strip(),
                        s.getint("period"),
                        _harmonics(s.get("harmonics", "1")),
                        s.getint("window"),
                        s.getint("iterations", 1),
                    )
                )
        if comps:
            kw["components"] = tuple(comps)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return replace(cfg, **kw)
