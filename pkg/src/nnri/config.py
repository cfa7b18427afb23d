"""TOML study configuration files and the shipped presets.

A configuration is a flat table of study settings with two optional
sections::

    name = "scenario1-mcar75"
    scenario = "uniform100k"
    population_size = 1000
    replicates = 500
    seed = 20240101
    methods = ["NAIVE", "PARAM1", "PARAM2"]

    [strata]
    boundaries = [25000.0, 50000.0, 75000.0]
    fractions = [0.1, 0.25, 0.5, 1.0]

    [response]
    kind = "mcar"
    probs = [0.75]

Errors name the offending field and, when it can be located, the line.
"""

from __future__ import annotations

import re
import sys
from importlib import resources
from pathlib import Path

from .design import DEFAULT_FRACTIONS, SampleDesign
from .errors import ConfigurationError, DesignError
from .popgen import STRATA_BOUNDARIES, Scenario
from .response import MECHANISMS, ResponseMechanism, parse_mechanism
from .simulation import DEFAULT_METHODS, StudyConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TOP_KEYS = {
    "name", "scenario", "population_size", "replicates", "seed", "methods", "allocation",
    "n_knots", "lam_grid", "ve_mode", "vm_mode",
}
SECTION_KEYS = {"strata": {"boundaries", "fractions"}, "response": {"kind", "probs", "mechanism"}}

PRESET_MECHANISMS = ("mcar75", "mcar50", "negative_mar", "positive_mar")
PRESET_SIZES = (1000, 500)


def _locate(text: str, section: str | None, key: str) -> int | None:
    """1-based line of ``key`` inside ``section`` (None for the top table)."""
    current = None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for lineno, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            continue
        if current == section and pat.match(line):
            return lineno
    return None


class _Reader:
    def __init__(self, text, source):
        self.text = text
        self.source = source

    def error(self, section, key, message):
        field = key if section is None else f"{section}.{key}"
        line = _locate(self.text, section, key)
        where = f"{self.source}:{line}: " if line else f"{self.source}: "
        return ConfigurationError(f"{where}{field}: {message}")


def parse_config(text: str, source: str = "<config>") -> StudyConfig:
    """Parse TOML text into a validated :class:`StudyConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None) or text.count("\n") + 1
        msg = re.sub(r"\s*\(at [^)]*\)$", "", str(exc))
        raise ConfigurationError(f"{source}:{line}: malformed TOML: {msg}") from None
    r = _Reader(text, source)

    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SECTION_KEYS:
                raise ConfigurationError(f"{source}: unknown section [{key}]")
            for sub in value:
                if sub not in SECTION_KEYS[key]:
                    raise r.error(key, sub, "unknown key")
        elif key not in TOP_KEYS:
            raise r.error(None, key, "unknown key")

    kwargs = {}
    try:
        kwargs["scenario"] = Scenario.parse(data.get("scenario", "uniform100k"))
    except ConfigurationError as exc:
        raise r.error(None, "scenario", str(exc).split(": ", 1)[-1]) from None

    for key, typ in (("population_size", int), ("replicates", int), ("seed", int),
                     ("n_knots", int), ("allocation", str), ("ve_mode", str),
                     ("vm_mode", str), ("name", str)):
        if key in data:
            if not isinstance(data[key], typ) or isinstance(data[key], bool):
                raise r.error(None, key, f"expected {typ.__name__}, got {data[key]!r}")
            kwargs[key] = data[key]
    if "methods" in data:
        if not isinstance(data["methods"], list):
            raise r.error(None, "methods", "expected a list of method names")
        kwargs["methods"] = tuple(data["methods"])
    if "lam_grid" in data:
        kwargs["lam_grid"] = tuple(float(v) for v in data["lam_grid"])

    strata = data.get("strata", {})
    if "boundaries" in strata:
        kwargs["strata_boundaries"] = tuple(float(v) for v in strata["boundaries"])
    if "fractions" in strata:
        kwargs["fractions"] = tuple(float(v) for v in strata["fractions"])

    resp = data.get("response", {})
    try:
        if "mechanism" in resp:
            kwargs["mechanism"] = parse_mechanism(resp["mechanism"])
        elif resp:
            kwargs["mechanism"] = ResponseMechanism(resp.get("kind", "mcar"),
                                                    tuple(resp.get("probs", ())))
    except ConfigurationError as exc:
        key = "mechanism" if "mechanism" in resp else "probs"
        raise r.error("response", key, str(exc).split(": ", 1)[-1]) from None

    try:
        cfg = StudyConfig(**kwargs)
        H = cfg.population_config(0).num_strata
    except ConfigurationError as exc:
        msg = str(exc)
        field, _, rest = msg.partition(": ")
        section = None
        if field in ("strata_boundaries", "boundaries"):
            section, field = "strata", "boundaries"
        elif field == "fractions":
            section = "strata"
        elif field == "mechanism":
            section, field = "response", "probs"
        elif field not in TOP_KEYS:
            raise ConfigurationError(f"{source}: {msg}") from None
        raise r.error(section, field, rest or msg) from None
    try:
        SampleDesign(cfg.fractions, cfg.allocation)
    except DesignError as exc:
        key = "allocation" if "rule" in str(exc) else "fractions"
        raise r.error(None if key == "allocation" else "strata", key, str(exc)) from None
    if len(cfg.fractions) != H:
        raise r.error("strata", "fractions", f"{len(cfg.fractions)} fractions for {H} strata")
    if cfg.mechanism.kind == "mar" and len(cfg.mechanism.probs) != H:
        raise r.error("response", "probs", f"{len(cfg.mechanism.probs)} propensities for {H} strata")
    return cfg


def load_config(path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))


def render_config(cfg: StudyConfig) -> str:
    """TOML text that :func:`parse_config` turns back into ``cfg``."""

    def arr(values):
        return "[" + ", ".join(repr(v) for v in values) + "]"

    boundaries = cfg.strata_boundaries or STRATA_BOUNDARIES[cfg.scenario]
    lines = [
        f'name = "{cfg.name}"',
        f'scenario = "{cfg.scenario.value}"',
        f"population_size = {cfg.population_size}",
        f"replicates = {cfg.replicates}",
        f"seed = {cfg.seed}",
        "methods = [" + ", ".join(f'"{m}"' for m in cfg.methods) + "]",
        f'allocation = "{cfg.allocation}"',
        f"n_knots = {cfg.n_knots}",
        f've_mode = "{cfg.ve_mode}"',
        f'vm_mode = "{cfg.vm_mode}"',
    ]
    if cfg.lam_grid is not None:
        lines.append(f"lam_grid = {arr(cfg.lam_grid)}")
    lines += [
        "",
        "[strata]",
        f"boundaries = {arr(float(b) for b in boundaries)}",
        f"fractions = {arr(cfg.fractions)}",
        "",
        "[response]",
        f'kind = "{cfg.mechanism.kind}"',
        f"probs = {arr(cfg.mechanism.probs)}",
        "",
    ]
    return "\n".join(lines)


def preset_name(scenario: Scenario, mechanism: str, population_size: int) -> str:
    index = list(Scenario).index(scenario) + 1
    name = f"scenario{index}-{mechanism.replace('_', '-')}"
    return name if population_size == 1000 else f"{name}-n{population_size}"


def study_presets() -> dict[str, StudyConfig]:
    """Every simulation configuration of the study: 3 scenarios x 4 mechanisms x 2 sizes."""
    out = {}
    for scenario in Scenario:
        for mech in PRESET_MECHANISMS:
            for N in PRESET_SIZES:
                name = preset_name(scenario, mech, N)
                out[name] = StudyConfig(
                    scenario=scenario, population_size=N, replicates=500,
                    mechanism=MECHANISMS[mech], methods=DEFAULT_METHODS,
                    fractions=DEFAULT_FRACTIONS, name=name,
                )
    return out


def list_presets() -> list[str]:
    files = resources.files("nnri").joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> StudyConfig:
    res = resources.files("nnri").joinpath("presets", f"{name}.toml")
    if not res.is_file():
        raise ConfigurationError(f"preset: unknown preset {name!r}; choose from {list_presets()}")
    return parse_config(res.read_text(encoding="utf-8"), f"preset:{name}")


def write_presets(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, cfg in study_presets().items():
        p = directory / f"{name}.toml"
        p.write_text(render_config(cfg), encoding="utf-8")
        paths.append(p)
    return paths


__all__ = [
    "list_presets",
    "load_config",
    "load_preset",
    "study_presets",
    "parse_config",
    "render_config",
    "write_presets",
]
