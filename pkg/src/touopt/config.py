"""Run configuration files (TOML).

Relative paths are resolved against the directory of the config file. See
``data/configs/mep.toml`` for a complete example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import DIFFERENCE, PARAMETERS, RELATIVE_MODES
from .bes import BatterySpec
from .solver import BACKENDS, SolverConfig

RESOLUTIONS = (15, 30, 60)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    load_profile: Path
    pv_unit_profile: Path | None
    tariff_files: tuple[Path, ...]
    timezone: str = "America/Los_Angeles"
    year: int = 2019
    file_resolution: int = 60
    resolution: int = 60
    pv_capacity_kw: float = 0.0
    battery: BatterySpec = field(default_factory=BatterySpec.none)
    solver: SolverConfig = field(default_factory=SolverConfig)
    workers: int = 1
    baseline: str | None = None
    relative_mode: str = DIFFERENCE
    bill_tariffs: tuple[str, ...] = ()
    sweeps: dict = field(default_factory=dict)  # parameter -> values
    bva_power: tuple[float, ...] = ()
    bva_duration_hours: float = 2.0
    source: Path | None = None

    def __post_init__(self):
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(f"resolution must be one of {RESOLUTIONS} minutes, got {self.resolution}")
        if self.file_resolution <= 0:
            raise ConfigError("file_resolution must be positive")
        if self.relative_mode not in RELATIVE_MODES:
            raise ConfigError(f"relative_mode must be one of {RELATIVE_MODES}")
        if not math.isfinite(self.pv_capacity_kw) or self.pv_capacity_kw < 0:
            raise ConfigError("pv_capacity_kw must be finite and >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for parameter in self.sweeps:
            if parameter not in PARAMETERS:
                raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(PARAMETERS)}")

    def check_files(self) -> None:
        """Raise :class:`ConfigError` naming the first referenced file that is missing."""
        paths = [("load profile", self.load_profile)]
        if self.pv_unit_profile is not None:
            paths.append(("PV unit profile", self.pv_unit_profile))
        paths += [("tariff file", p) for p in self.tariff_files]
        for what, path in paths:
            if not Path(path).is_file():
                raise ConfigError(f"{what} not found: {path}")

    def with_overrides(self, resolution=None, backend=None, baseline=None) -> "RunConfig":
        changes = {}
        if resolution is not None:
            changes["resolution"] = resolution
        if backend is not None:
            try:
                changes["solver"] = replace(self.solver, backend=backend)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if baseline is not None:
            changes["baseline"] = baseline
        return replace(self, **changes) if changes else self


def _table(doc: dict, key: str) -> dict:
    value = doc.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _floats(values, where: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of numbers") from None


def _battery(doc: dict) -> BatterySpec:
    if not doc:
        return BatterySpec.none()
    power = float(doc.get("power_kw", 0.0))
    if "energy_kwh" in doc and "duration_hours" in doc:
        raise ConfigError("[battery] takes energy_kwh or duration_hours, not both")
    energy = float(doc["energy_kwh"]) if "energy_kwh" in doc else power * float(doc.get("duration_hours", 2.0))
    kwargs = {k: float(doc[k]) for k in ("round_trip_efficiency", "soc_min_kwh", "soc_max_kwh", "soc_init_kwh") if k in doc}
    unknown = set(doc) - {"power_kw", "energy_kwh", "duration_hours", *kwargs}
    if unknown:
        raise ConfigError(f"unknown [battery] keys {sorted(unknown)}")
    try:
        return BatterySpec(energy, power, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[battery]: {exc}") from None


def _solver(doc: dict) -> SolverConfig:
    known = {"backend", "feasibility_tolerance", "optimality_tolerance", "max_iterations", "time_limit_seconds", "external_command"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown [solver] keys {sorted(unknown)}")
    try:
        return SolverConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[solver]: {exc}") from None


def parse_config(doc: dict, base_dir: Path = Path("."), source: Path | None = None) -> RunConfig:
    base_dir = Path(base_dir)

    def path(value):
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    try:
        site = _table(doc, "site")
        tariffs = _table(doc, "tariffs")
        bill = _table(doc, "bill")
        sweep = _table(doc, "sweep")
        bva = _table(doc, "bva")
        if "load" not in site:
            raise ConfigError("[site] needs a load profile path ('load')")
        files = tariffs.get("files", [])
        if not files:
            raise ConfigError("[tariffs] needs at least one entry in 'files'")
        if bva and "duration_hours" in bva and not float(bva["duration_hours"]) > 0:
            raise ConfigError("[bva] duration_hours must be > 0")
        sweeps = {}
        for parameter in sweep.get("scenarios", []):
            key = "pv_capacity" if parameter.startswith("pv_capacity") else "bes_power"
            if key not in sweep:
                raise ConfigError(f"[sweep] scenario {parameter} needs a '{key}' grid")
            sweeps[parameter] = _floats(sweep[key], f"[sweep] {key}")
        return RunConfig(
            load_profile=path(site["load"]),
            pv_unit_profile=path(site["pv_unit"]) if "pv_unit" in site else None,
            tariff_files=tuple(path(f) for f in files),
            timezone=site.get("timezone", "America/Los_Angeles"),
            year=int(site.get("year", 2019)),
            file_resolution=int(site.get("file_resolution", 60)),
            resolution=int(site.get("resolution", 60)),
            pv_capacity_kw=float(site.get("pv_capacity_kw", 0.0)),
            battery=_battery(_table(doc, "battery")),
            solver=_solver(_table(doc, "solver")),
            workers=int(doc.get("workers", 1)),
            baseline=tariffs.get("baseline"),
            relative_mode=tariffs.get("relative_mode", DIFFERENCE),
            bill_tariffs=tuple(bill.get("tariffs", ())),
            sweeps=sweeps,
            bva_power=_floats(bva.get("bes_power", ()), "[bva] bes_power"),
            bva_duration_hours=float(bva.get("duration_hours", 2.0)),
            source=source,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML syntax error: {exc}") from None
    try:
        return parse_config(doc, path.parent, path)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
