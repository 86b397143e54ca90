"""TOML run configuration: scenario, channel model, rectifier, uncertainty,
sweep and CDF settings.

Powers are given in dBm and SINR targets in dB here; everything handed to the
solvers is linear and in watts. Errors carry the file line of the offending
key when it can be located.
"""
from __future__ import annotations

import hashlib
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eh import EhModel
from .errors import ConfigError
from .model import ChannelConfig, SystemScenario, UncertaintyModel, db_to_linear, dbm_to_watts, default_sar_matrix

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SWEEP_PARAMETERS = ("sar_limit", "eh_target", "total_power", "uncertainty_radius")
SCHEMES = ("optimal", "fast_su", "zf", "rzf", "hybrid", "robust", "nonrobust", "backoff", "no_sar")

_SECTIONS = {
    "scenario": {"num_users", "num_antennas", "noise_antenna_dbm", "noise_circuit_dbm", "power_budget_dbm",
                 "sinr_target_db", "eh_target_dbm", "sar_limits", "sar_matrices"},
    "channel": {"frequency_hz", "gain_tx_dbi", "gain_rx_dbi", "path_loss_exponent", "reference_distance_m",
                "distance_range_m", "angle_range_deg", "rician_factor_db"},
    "eh": {"a", "b", "c"},
    "uncertainty": {"channel_radius", "sar_radius", "sar_mode", "randomization_draws"},
    "solver": {"bisection_rel_tol", "t_floor"},
    "sweep": {"parameter", "values", "trials", "seed", "schemes"},
    "robust_cdf": {"trials", "samples", "seed", "channel_radius", "sar_radius"},
    "single_user": {"trials", "seed", "num_antennas"},
}


@dataclass(frozen=True)
class SweepSettings:
    parameter: str = "sar_limit"
    values: tuple = (0.4, 0.8, 1.2, 1.6, 2.0)
    trials: int = 100
    seed: int = 1
    schemes: tuple = ("optimal", "hybrid", "zf", "rzf", "backoff")


@dataclass(frozen=True)
class CdfSettings:
    trials: int = 10
    samples: int = 1000
    seed: int = 1
    channel_radius: float = 5e-8  # radius on ||dh_k||
    sar_radius: float = 7e-8  # radius on ||dA_l||_F


@dataclass(frozen=True)
class SingleUserSettings:
    trials: int = 50
    seed: int = 1
    num_antennas: int = 4


@dataclass(frozen=True)
class RunConfig:
    scenario: SystemScenario
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    eh: EhModel = field(default_factory=EhModel)
    channel_radius: float = 0.0
    sar_radius: float = 0.0
    sar_mode: str = "exact"
    randomization_draws: int = 1000
    bisection_rel_tol: float = 1e-3
    t_floor: float = 1e-6
    sweep: SweepSettings = field(default_factory=SweepSettings)
    robust_cdf: CdfSettings = field(default_factory=CdfSettings)
    single_user: SingleUserSettings = field(default_factory=SingleUserSettings)
    source_hash: str = ""

    def uncertainty(self, scenario=None, channel_radius=None, sar_radius=None) -> UncertaintyModel:
        sc = scenario or self.scenario
        return UncertaintyModel.uniform(sc.num_users, sc.num_sar,
                                        self.channel_radius if channel_radius is None else channel_radius,
                                        self.sar_radius if sar_radius is None else sar_radius)


def _key_line(text, section, key):
    """1-based line of ``key`` inside ``[section]`` (or of the header itself)."""
    current = None
    header = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.-]+)\s*\]", stripped)
        if m:
            current = m.group(1)
            if current == section:
                header = i
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return i
    return header


class _Reader:
    def __init__(self, data, text, path):
        self.data, self.text, self.path = data, text, path

    def fail(self, message, section, key=None):
        raise ConfigError(message, self.path, _key_line(self.text, section, key))

    def section(self, name):
        sec = self.data.get(name, {})
        if not isinstance(sec, dict):
            self.fail(f"[{name}] must be a table", name)
        unknown = set(sec) - _SECTIONS[name]
        if unknown:
            key = sorted(unknown)[0]
            self.fail(f"unknown key {key!r} in [{name}]", name, key)
        return sec

    def number(self, sec, section, key, default, positive=False, nonneg=False, integer=False):
        if key not in sec:
            return default
        value = sec[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"{key} must be a number, got {type(value).__name__}", section, key)
        if integer and not float(value).is_integer():
            self.fail(f"{key} must be an integer", section, key)
        if not math.isfinite(value):
            self.fail(f"{key} must be finite", section, key)
        if positive and not value > 0:
            self.fail(f"{key} must be positive", section, key)
        if nonneg and value < 0:
            self.fail(f"{key} must be nonnegative", section, key)
        return int(value) if integer else float(value)

    def numbers(self, sec, section, key, default, length=None):
        if key not in sec:
            return default
        value = sec[key]
        if not isinstance(value, list) or not value or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            self.fail(f"{key} must be a non-empty list of numbers", section, key)
        if length is not None and len(value) != length:
            self.fail(f"{key} must have {length} entries", section, key)
        return tuple(float(v) for v in value)

    def strings(self, sec, section, key, default, allowed):
        if key not in sec:
            return default
        value = sec[key]
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not value or not all(isinstance(v, str) for v in value):
            self.fail(f"{key} must be a string or a list of strings", section, key)
        for v in value:
            if v not in allowed:
                self.fail(f"{key}: {v!r} is not one of {', '.join(allowed)}", section, key)
        return tuple(value)


def _sar_matrix(reader, raw, index, Nt):
    """Row-major list of rows, each a list of [re, im] pairs."""
    try:
        A = np.array([[complex(float(p[0]), float(p[1])) for p in row] for row in raw])
    except (TypeError, ValueError, IndexError):
        reader.fail(f"sar_matrices[{index}] must be rows of [re, im] pairs", "scenario", "sar_matrices")
    if A.shape != (Nt, Nt):
        reader.fail(f"sar_matrices[{index}] must be {Nt}x{Nt}", "scenario", "sar_matrices")
    return A


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(raw.decode("utf-8"), path)


def parse_config(text: str, path=None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", path, int(m.group(1)) if m else None) from None
    r = _Reader(data, text, path)
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown section or key {name!r}", path, _key_line(text, name, None)
                          or _top_level_line(text, name))

    sec = r.section("scenario")
    K = r.number(sec, "scenario", "num_users", 4, positive=True, integer=True)
    Nt = r.number(sec, "scenario", "num_antennas", 4, positive=True, integer=True)
    limits = r.numbers(sec, "scenario", "sar_limits", (1.6,))
    if "sar_matrices" in sec:
        mats = sec["sar_matrices"]
        if not isinstance(mats, list):
            r.fail("sar_matrices must be a list of matrices", "scenario", "sar_matrices")
        mats = tuple(_sar_matrix(r, m, i, Nt) for i, m in enumerate(mats))
    elif Nt == 4:
        mats = tuple(default_sar_matrix() for _ in limits)
    else:
        r.fail("sar_matrices is required when num_antennas is not 4", "scenario", "num_antennas")
    if len(mats) != len(limits):
        r.fail(f"{len(limits)} SAR limits but {len(mats)} SAR matrices", "scenario", "sar_limits")
    try:
        scenario = SystemScenario(
            num_antennas=Nt,
            num_users=K,
            noise_antenna=float(dbm_to_watts(r.number(sec, "scenario", "noise_antenna_dbm", -70.0))),
            noise_circuit=float(dbm_to_watts(r.number(sec, "scenario", "noise_circuit_dbm", -50.0))),
            power_budget=(float(dbm_to_watts(r.number(sec, "scenario", "power_budget_dbm", 0.0)))
                          if "power_budget_dbm" in sec else 2.0),
            sar_limits=limits,
            sar_matrices=mats,
            sinr_targets=np.full(K, float(db_to_linear(r.number(sec, "scenario", "sinr_target_db", 10.0)))),
            eh_targets=np.full(K, float(dbm_to_watts(r.number(sec, "scenario", "eh_target_dbm", -15.0)))),
        )
    except ValueError as exc:
        r.fail(str(exc), "scenario")

    sec = r.section("channel")
    defaults = ChannelConfig()
    dist = r.numbers(sec, "channel", "distance_range_m", defaults.distance_range, 2)
    angles = r.numbers(sec, "channel", "angle_range_deg", tuple(np.degrees(defaults.angle_range)), 2)
    if not 0 < dist[0] <= dist[1]:
        r.fail("distance_range_m must satisfy 0 < low <= high", "channel", "distance_range_m")
    channel = ChannelConfig(
        frequency=r.number(sec, "channel", "frequency_hz", defaults.frequency, positive=True),
        gain_tx_dbi=r.number(sec, "channel", "gain_tx_dbi", defaults.gain_tx_dbi),
        gain_rx_dbi=r.number(sec, "channel", "gain_rx_dbi", defaults.gain_rx_dbi),
        path_loss_exponent=r.number(sec, "channel", "path_loss_exponent", defaults.path_loss_exponent, positive=True),
        reference_distance=r.number(sec, "channel", "reference_distance_m", defaults.reference_distance,
                                    positive=True),
        distance_range=dist,
        angle_range=tuple(float(np.radians(a)) for a in angles),
        rician_factor_db=r.number(sec, "channel", "rician_factor_db", defaults.rician_factor_db),
    )
    if dist[0] < channel.reference_distance:
        r.fail("distances must not fall below the reference distance", "channel", "distance_range_m")

    sec = r.section("eh")
    d = EhModel()
    try:
        eh = EhModel(r.number(sec, "eh", "a", d.a), r.number(sec, "eh", "b", d.b), r.number(sec, "eh", "c", d.c))
    except ValueError as exc:
        r.fail(str(exc), "eh")

    sec = r.section("uncertainty")
    channel_radius = r.number(sec, "uncertainty", "channel_radius", 0.0, nonneg=True)
    sar_radius = r.number(sec, "uncertainty", "sar_radius", 0.0, nonneg=True)
    sar_mode = r.strings(sec, "uncertainty", "sar_mode", ("exact",), ("exact", "surrogate"))
    if len(sar_mode) != 1:
        r.fail("sar_mode must be a single string", "uncertainty", "sar_mode")
    draws = r.number(sec, "uncertainty", "randomization_draws", 1000, positive=True, integer=True)

    sec = r.section("solver")
    rel_tol = r.number(sec, "solver", "bisection_rel_tol", 1e-3, positive=True)
    t_floor = r.number(sec, "solver", "t_floor", 1e-6, positive=True)

    sec = r.section("sweep")
    sd = SweepSettings()
    parameter = r.strings(sec, "sweep", "parameter", (sd.parameter,), SWEEP_PARAMETERS)
    if len(parameter) != 1:
        r.fail("parameter must be a single string", "sweep", "parameter")
    sweep = SweepSettings(
        parameter=parameter[0],
        values=r.numbers(sec, "sweep", "values", sd.values),
        trials=r.number(sec, "sweep", "trials", sd.trials, positive=True, integer=True),
        seed=r.number(sec, "sweep", "seed", sd.seed, nonneg=True, integer=True),
        schemes=r.strings(sec, "sweep", "schemes", sd.schemes, SCHEMES),
    )

    sec = r.section("robust_cdf")
    cd = CdfSettings()
    cdf = CdfSettings(
        trials=r.number(sec, "robust_cdf", "trials", cd.trials, positive=True, integer=True),
        samples=r.number(sec, "robust_cdf", "samples", cd.samples, positive=True, integer=True),
        seed=r.number(sec, "robust_cdf", "seed", cd.seed, nonneg=True, integer=True),
        channel_radius=r.number(sec, "robust_cdf", "channel_radius", cd.channel_radius, nonneg=True),
        sar_radius=r.number(sec, "robust_cdf", "sar_radius", cd.sar_radius, nonneg=True),
    )

    sec = r.section("single_user")
    su = SingleUserSettings()
    single = SingleUserSettings(
        trials=r.number(sec, "single_user", "trials", su.trials, positive=True, integer=True),
        seed=r.number(sec, "single_user", "seed", su.seed, nonneg=True, integer=True),
        num_antennas=r.number(sec, "single_user", "num_antennas", su.num_antennas, positive=True, integer=True),
    )

    return RunConfig(scenario, channel, eh, channel_radius, sar_radius, sar_mode[0], draws, rel_tol, t_floor, sweep,
                     cdf, single, hashlib.sha256(text.encode("utf-8")).hexdigest())


def _top_level_line(text, key):
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*{re.escape(key)}\s*=", line):
            return i
    return None


def default_config() -> RunConfig:
    return parse_config("")
