"""Run configuration: embedded defaults, one TOML file, flag overrides.

Precedence is defaults < config file < command-line flags. Every run writes
the fully resolved configuration next to its outputs so the run can be
reproduced from the snapshot alone.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class StageSpec:
    name: str
    syntaxes: list[int]
    steps: int
    replay: float = 0.25
    criterion: float | None = None


@dataclass
class RunConfig:
    seed: int = 42
    out_dir: str = "runs/latest"

    # dimensions (symbol code and quantity widths are fixed by the codec)
    v3: int = 128
    v4: int = 32
    pfc_hidden: int = 512
    ips_hidden: int = 32
    vision_widths: list[int] = field(default_factory=lambda: [512, 256])

    # optimizer
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    # data source: IDX files when both paths are set, synthetic pool otherwise
    idx_images: str | None = None
    idx_labels: str | None = None
    pool_size: int = 2000
    vision_images: int = 10000

    # per-subsystem training
    vision_steps: int = 5000
    vision_batch: int = 32
    ips_steps: int = 10000
    ips_batch: int = 0  # 0 = full sentence set every step
    pfc_batch: int = 16
    replay: float = 0.25
    stage_scale: float = 1.0
    stages: list[StageSpec] | None = None  # None = built-in curriculum

    eval_episodes: int = 60

    # gateway
    host: str = "127.0.0.1"
    port: int = 8321
    session_ttl: float = 600.0


_SECTION_FIELDS = {
    "": ("seed", "out_dir"),
    "dims": ("v3", "v4", "pfc_hidden", "ips_hidden", "vision_widths"),
    "optimizer": ("lr", "beta1", "beta2", "eps"),
    "data": ("idx_images", "idx_labels", "pool_size", "vision_images"),
    "vision": ("vision_steps", "vision_batch"),
    "ips": ("ips_steps", "ips_batch"),
    "pfc": ("pfc_batch", "replay", "stage_scale", "stages"),
    "eval": ("eval_episodes",),
    "serve": ("host", "port", "session_ttl"),
}
_PREFIXED = {"vision": "vision_", "ips": "ips_", "pfc": "pfc_", "eval": "eval_"}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file does not parse: {exc}") from exc
        _apply_document(cfg, doc, str(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown override {key!r}")
        setattr(cfg, key, value)
    validate(cfg)
    return cfg


def _apply_document(cfg: RunConfig, doc: dict, where: str) -> None:
    for section, body in doc.items():
        if isinstance(body, dict):
            fields = _SECTION_FIELDS.get(section)
            if fields is None:
                raise ConfigError(f"unknown section [{section}] in {where}")
            for key, value in body.items():
                if key == "stages" and section == "pfc":
                    cfg.stages = _parse_stages(value)
                    continue
                attr = key if key in fields else _PREFIXED.get(section, "") + key
                if attr not in fields:
                    raise ConfigError(f"unknown key {key!r} in [{section}] of {where}")
                setattr(cfg, attr, value)
        else:
            if section not in _SECTION_FIELDS[""]:
                raise ConfigError(f"unknown top-level key {section!r} in {where}")
            setattr(cfg, section, body)


def _parse_stages(raw) -> list[StageSpec]:
    stages = []
    for entry in raw:
        try:
            stages.append(StageSpec(
                name=entry["name"],
                syntaxes=[int(s) for s in entry["syntaxes"]],
                steps=int(entry["steps"]),
                replay=float(entry.get("replay", 0.25)),
                criterion=entry.get("criterion"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad stage entry {entry!r}: {exc}") from exc
    return stages


def validate(cfg: RunConfig) -> None:
    if cfg.v3 <= 0 or cfg.v4 <= 0 or cfg.pfc_hidden <= 0 or cfg.ips_hidden <= 0:
        raise ConfigError("all dimensions must be positive")
    if len(cfg.vision_widths) != 2:
        raise ConfigError("vision_widths needs exactly two hidden sizes "
                          "(the latent must be the third encoder stage)")
    if not 0.0 <= cfg.replay < 1.0:
        raise ConfigError(f"replay fraction {cfg.replay} outside [0, 1)")
    if (cfg.idx_images is None) != (cfg.idx_labels is None):
        raise ConfigError("idx_images and idx_labels must be set together")
    for p in (cfg.idx_images, cfg.idx_labels):
        if p is not None and not Path(p).exists():
            raise ConfigError(f"data file does not exist: {p}")
    if cfg.stages is not None:
        for st in cfg.stages:
            bad = [s for s in st.syntaxes if not 1 <= s <= 8]
            if bad:
                raise ConfigError(f"stage {st.name!r} references unknown syntaxes {bad}")
    if not 1 <= cfg.port <= 65535:
        raise ConfigError(f"port {cfg.port} out of range")
    for name in ("pool_size", "vision_images", "vision_steps", "ips_steps",
                 "vision_batch", "pfc_batch", "eval_episodes"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {v!r}")


def snapshot(cfg: RunConfig, path) -> None:
    """Write the resolved configuration as TOML; reloading it reproduces cfg."""
    lines = []
    for key in _SECTION_FIELDS[""]:
        lines.append(f"{key} = {_toml_value(getattr(cfg, key))}")
    for section, fields in _SECTION_FIELDS.items():
        if not section:
            continue
        body = []
        for attr in fields:
            if attr == "stages":
                continue
            value = getattr(cfg, attr)
            if value is None:
                continue
            key = attr[len(_PREFIXED[section]):] if section in _PREFIXED and \
                attr.startswith(_PREFIXED[section]) else attr
            body.append(f"{key} = {_toml_value(value)}")
        if body:
            lines.append("")
            lines.append(f"[{section}]")
            lines.extend(body)
    if cfg.stages is not None:
        for st in cfg.stages:
            lines.append("")
            lines.append("[[pfc.stages]]")
            entry = asdict(st)
            for k, v in entry.items():
                if v is not None:
                    lines.append(f"{k} = {_toml_value(v)}")
    Path(path).write_text("\n".join(lines) + "\n")
