"""Experiment configuration: a JSON document with unit-suffixed keys.

Every physical quantity carries its unit in the key name. Decibel inputs are
converted to linear values once, here, and nowhere else.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .communication import CommParams
from .errors import ConfigError, DomainError
from .monte_carlo import McConfig
from .sensing import SensingParams
from .tradeoff import BackhaulParams, BoundaryGrid, IsacParams

DEFAULTS: dict[str, Any] = {
    "network": {
        "lambda_b_per_km2": 1.0,
        "lambda_u_per_km2": 1.0,
        "lambda_s_per_km2": 1.0,
        "m_t": 4,
        "m_r": 5,
        "p_t_w": 1.0,
        "alpha": 4.0,
        "beta": 2.0,
        "sigma_av_m2": 1.0,
        "sigma_s_sq_db": -80.0,
        "psi": 15,
        "f_c_hz": 3.5e9,
        "bandwidth_sq_hz2": 1e16,
        "zeta_sq_override_km2": None,
    },
    "backhaul": {"c_backhaul_nats": 8.6, "e_nats": None},
    "mc": {
        "trials": 10000,
        "master_seed": 0,
        "channel_mode": "gamma_surrogate",
        "block_size": 2048,
        "workers": 1,
    },
    "grid": {"L_min": 1, "L_max": 30, "p_c_ratio_step": 0.02},
    "output_dir": "out",
}


@dataclass(frozen=True)
class NetworkParams:
    """Deployment and link constants, normalised to linear units."""

    lambda_b: float
    lambda_u: float
    lambda_s: float
    m_t: int
    m_r: int
    p_t: float
    alpha: float
    beta: float
    sigma_av: float
    sigma_s_sq: float
    psi: int
    f_c: float
    bandwidth_sq: float
    zeta_sq_override: Optional[float] = None

    @property
    def mu_c(self) -> float:
        return self.lambda_u / self.lambda_b

    @property
    def mu_s(self) -> float:
        return self.lambda_s / self.lambda_b

    def comm(self, p_c: Optional[float] = None) -> CommParams:
        return CommParams(
            alpha=self.alpha, m_t=self.m_t, p_c=self.p_t / 2 if p_c is None else p_c,
            p_t=self.p_t, lambda_b=self.lambda_b, mu_c=self.mu_c, psi=self.psi,
        )

    def sensing(self, p_s: Optional[float] = None) -> SensingParams:
        # transmit gain of the sensing beam after one ZF dimension is spent
        return SensingParams(
            beta=self.beta, sigma_av=self.sigma_av, sigma_s_sq=self.sigma_s_sq,
            p_s=self.p_t if p_s is None else p_s, G_t=float(self.m_t - 1), G_r=float(self.m_r),
            f_c=self.f_c, bandwidth_sq=self.bandwidth_sq, zeta_sq_override=self.zeta_sq_override,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkParams
    backhaul: BackhaulParams
    mc: McConfig
    grid: BoundaryGrid
    output_dir: str
    raw: dict = field(repr=False, compare=False, default_factory=dict)

    def isac(self) -> IsacParams:
        return IsacParams(comm=self.network.comm(), sensing=self.network.sensing(), mu_s=self.network.mu_s)

    def digest(self) -> str:
        """SHA-256 of the configuration, ignoring the output directory and worker count."""
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        body["mc"] = {k: v for k, v in body["mc"].items() if k != "workers"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for k, v in override.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _num(section: dict, key: str, kind=float):
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{key!r} must be an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ConfigError(f"{key!r} must be finite")
    return float(v)


def build_config(overrides: Optional[dict] = None) -> ExperimentConfig:
    """Merge ``overrides`` into the defaults, validate, and normalise units."""
    raw = _merge(DEFAULTS, overrides or {})
    n, b, m, g = raw["network"], raw["backhaul"], raw["mc"], raw["grid"]
    try:
        zo = n["zeta_sq_override_km2"]
        net = NetworkParams(
            lambda_b=_num(n, "lambda_b_per_km2"), lambda_u=_num(n, "lambda_u_per_km2"),
            lambda_s=_num(n, "lambda_s_per_km2"), m_t=_num(n, "m_t", int), m_r=_num(n, "m_r", int),
            p_t=_num(n, "p_t_w"), alpha=_num(n, "alpha"), beta=_num(n, "beta"),
            sigma_av=_num(n, "sigma_av_m2"), sigma_s_sq=db_to_linear(_num(n, "sigma_s_sq_db")),
            psi=_num(n, "psi", int), f_c=_num(n, "f_c_hz"), bandwidth_sq=_num(n, "bandwidth_sq_hz2"),
            zeta_sq_override=None if zo is None else _num(n, "zeta_sq_override_km2"),
        )
        if net.lambda_b <= 0 or net.lambda_u < 0 or net.lambda_s < 0:
            raise ConfigError("densities must be positive (lambda_b) or non-negative")
        if net.m_r < 1:
            raise ConfigError("m_r must be >= 1")
        if net.beta != 2.0:
            raise ConfigError("the acceptance-aware CRLB requires beta = 2")
        net.comm()
        net.sensing()
        c = _num(b, "c_backhaul_nats")
        e = c / (2.0 * net.psi) if b["e_nats"] is None else _num(b, "e_nats")
        backhaul = BackhaulParams(c, e)
        if m["channel_mode"] not in ("gamma_surrogate", "true_zf"):
            raise ConfigError(f"unknown channel_mode {m['channel_mode']!r}")
        mc = McConfig(
            trials=_num(m, "trials", int), master_seed=_num(m, "master_seed", int),
            channel_mode=m["channel_mode"], block_size=_num(m, "block_size", int),
            workers=_num(m, "workers", int),
        )
        lo, hi, step = _num(g, "L_min", int), _num(g, "L_max", int), _num(g, "p_c_ratio_step")
        if not (1 <= lo <= hi) or not 0 < step < 1:
            raise ConfigError("grid needs 1 <= L_min <= L_max and 0 < p_c_ratio_step < 1")
        count = int(round(1.0 / step))
        ratios = tuple(round(k * step, 10) for k in range(1, count) if k * step < 1.0)
        grid = BoundaryGrid(tuple(range(lo, hi + 1)), ratios)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    if not isinstance(raw["output_dir"], str):
        raise ConfigError("output_dir must be a string")
    return ExperimentConfig(net, backhaul, mc, grid, raw["output_dir"], raw)


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return build_config()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return build_config(data)


def default_config_json() -> str:
    return json.dumps(DEFAULTS, indent=2, sort_keys=False) + "\n"


def with_overrides(cfg: ExperimentConfig, *, seed=None, trials=None, workers=None, output_dir=None) -> ExperimentConfig:
    """Apply command-line overrides by rebuilding from the raw document."""
    raw = json.loads(json.dumps(cfg.raw))
    if seed is not None:
        raw["mc"]["master_seed"] = seed
    if trials is not None:
        raw["mc"]["trials"] = trials
    if workers is not None:
        raw["mc"]["workers"] = workers
    if output_dir is not None:
        raw["output_dir"] = output_dir
    return build_config(raw)


__all__ = [
    "DEFAULTS", "ExperimentConfig", "NetworkParams", "build_config", "load_config",
    "with_overrides", "db_to_linear", "default_config_json",
]
