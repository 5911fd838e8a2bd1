"""Bundled scenario configs, one per reproduced experiment."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..experiments import SWEEP_AXES, VARIANTS, Scenario, scene_from_dict

EXTRA_KEYS = ("sweep", "compare_variants")


class ConfigError(ValueError):
    pass


@dataclass
class ConfigDoc:
    """A scenario plus optional sweep or variant-comparison instructions."""

    scenario: Scenario
    sweep: dict | None = None
    compare_variants: list = field(default_factory=list)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def bundled_text(name: str) -> str:
    res = resources.files(__name__) / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_names())}")
    return res.read_text()


def parse_config(doc: dict) -> ConfigDoc:
    if not isinstance(doc, dict):
        raise ConfigError("scenario config must be a JSON object")
    doc = dict(doc)
    extras = {k: doc.pop(k) for k in EXTRA_KEYS if k in doc}
    try:
        sc = Scenario.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    sweep = extras.get("sweep")
    if sweep is not None:
        if sweep.get("axis") not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {sweep.get('axis')!r}")
        sweep = {"axis": sweep["axis"], "values": [float(v) for v in sweep.get("values", SWEEP_AXES[sweep["axis"]])]}
    variants = list(extras.get("compare_variants", []))
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}")
    return ConfigDoc(sc, sweep, variants)


def _read_json(path: Path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_config(name_or_path: str, scene_path: str | None = None) -> ConfigDoc:
    """Resolve a bundled name or a JSON file; ``scene_path`` replaces the scene block."""
    p = Path(name_or_path)
    if p.suffix == ".json" or p.exists():
        doc = _read_json(p)
    else:
        doc = json.loads(bundled_text(name_or_path))
    if scene_path is not None:
        scene = _read_json(Path(scene_path))
        try:
            scene_from_dict(scene)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{scene_path}: {exc}") from exc
        doc["scene"] = scene
    return parse_config(doc)
