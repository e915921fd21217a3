"""Read and write the plain-text configuration format.

Sections: ``[constants]``, ``[particle]``, ``[stage.1]`` ... ``[stage.5]`` with
keys named after the dataclass fields, plus optional ``[protocol]`` (solver
options) and ``[field]`` (2D field for field checks). Units are SI.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .fields import FieldKind, FieldModel
from .model import (
    ExperimentConfig,
    ParticleSpec,
    PhysicalConstants,
    PotentialKind,
    SpinConfig,
    StageSpec,
)


class ConfigError(ValueError):
    pass


@dataclass
class LoadedConfig:
    experiment: ExperimentConfig
    protocol: dict = field(default_factory=dict)
    field_model: Optional[FieldModel] = None
    sha256: str = ""
    path: Optional[Path] = None


def _float(section, key, required=True, default=None):
    if key not in section:
        if required:
            raise ConfigError(f"[{section.name}] missing key {key!r}")
        return default
    raw = section[key].strip()
    if raw == "":
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a number") from exc


def _enum(enum_cls, raw, where):
    try:
        return enum_cls(raw.strip())
    except ValueError as exc:
        options = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{where}: {raw!r} is not one of {options}") from exc


PROTOCOL_FLOATS = ("t3_resolution", "stall_separation")
PROTOCOL_STRINGS = ("mode", "stage4_mode", "dynamics")


def parse_config(text: str, path: Optional[Path] = None) -> LoadedConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    const_kwargs = {}
    if cp.has_section("constants"):
        sec = cp["constants"]
        for f in fields(PhysicalConstants):
            v = _float(sec, f.name, required=False)
            if v is not None:
                const_kwargs[f.name] = v
    constants = PhysicalConstants(**const_kwargs)

    part_kwargs = {}
    if cp.has_section("particle"):
        sec = cp["particle"]
        for f in fields(ParticleSpec):
            v = _float(sec, f.name, required=False)
            if v is not None:
                part_kwargs[f.name] = v
    particle = ParticleSpec(**part_kwargs)

    protocol = {}
    if cp.has_section("protocol"):
        sec = cp["protocol"]
        for key in PROTOCOL_STRINGS:
            if key in sec:
                protocol[key] = sec[key].strip()
        for key in PROTOCOL_FLOATS:
            v = _float(sec, key, required=False)
            if v is not None:
                protocol[key] = v

    stage_sections = sorted(
        (s for s in cp.sections() if s.startswith("stage.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else 10**9,
    )
    stages = []
    for name in stage_sections:
        suffix = name.split(".", 1)[1]
        if not suffix.isdigit():
            raise ConfigError(f"bad stage section [{name}]")
        sec = cp[name]
        if "kind" not in sec or "spin" not in sec:
            raise ConfigError(f"[{name}] needs kind and spin")
        stages.append(StageSpec(
            index=int(suffix),
            kind=_enum(PotentialKind, sec["kind"], f"[{name}] kind"),
            spin=_enum(SpinConfig, sec["spin"], f"[{name}] spin"),
            duration=_float(sec, "duration", required=False),
            B0=_float(sec, "B0", required=False, default=0.0),
            eta_linear=_float(sec, "eta_linear", required=False),
            eta_nonlinear=_float(sec, "eta_nonlinear", required=False),
        ))

    fm = None
    if cp.has_section("field"):
        sec = cp["field"]
        fm = FieldModel(
            _enum(FieldKind, sec.get("kind", ""), "[field] kind"),
            _float(sec, "B0"),
            _float(sec, "eta"),
            _float(sec, "y_gradient_scale", required=False, default=1.0),
        )

    cfg = ExperimentConfig(constants, particle, tuple(stages), protocol.get("mode", "protocol"))
    digest = hashlib.sha256(text.encode()).hexdigest()
    return LoadedConfig(cfg, protocol, fm, digest, path)


def load_config(path) -> LoadedConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, path)


def _fmt(v) -> str:
    return format(v, ".17g")


def dump_config(cfg: ExperimentConfig, protocol: Optional[dict] = None,
                field_model: Optional[FieldModel] = None) -> str:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["constants"] = {f.name: _fmt(getattr(cfg.constants, f.name)) for f in fields(PhysicalConstants)}
    cp["particle"] = {f.name: _fmt(getattr(cfg.particle, f.name)) for f in fields(ParticleSpec)}
    proto = {"mode": cfg.mode}
    for k, v in (protocol or {}).items():
        if k != "mode":
            proto[k] = v if isinstance(v, str) else _fmt(v)
    cp["protocol"] = proto
    for s in cfg.stages:
        sec = {"kind": s.kind.value, "spin": s.spin.value}
        if s.B0:
            sec["B0"] = _fmt(s.B0)
        for key in ("eta_linear", "eta_nonlinear", "duration"):
            val = getattr(s, key)
            if val is not None:
                sec[key] = _fmt(val)
        cp[f"stage.{s.index}"] = sec
    if field_model is not None:
        cp["field"] = {"kind": field_model.kind.value, "B0": _fmt(field_model.B0),
                       "eta": _fmt(field_model.eta),
                       "y_gradient_scale": _fmt(field_model.y_gradient_scale)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def bundled(name: str) -> Path:
    """Path of a configuration shipped with the package (e.g. ``table2.cfg``)."""
    return Path(__file__).parent / "data" / name
