"""Flat ``key = value`` scenario configs and random scenario generation.

Example config::

    # desk scale
    M = 4
    N = 8
    bs_xyz = 0, 0, 0
    cu_region = 50, 55, 0, 5     # x_min, x_max, y_min, y_max
    chi_dB = 6

Unknown keys and malformed values raise :class:`ConfigError` naming the line.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .channels import Scenario, path_gain

SPEED_OF_LIGHT = 2.998e8


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 4
    N: int = 8
    a: int = 1
    K_c: int = 1
    K_t: int = 1
    L: int = 3
    A_over_lambda: float = 6.0
    carrier_GHz: float = 2.0
    bs_xyz: tuple = (0.0, 0.0, 0.0)
    irs_xyz: tuple = (30.0, 10.0, 5.0)
    cu_region: tuple = (50.0, 55.0, 0.0, 5.0)
    gamma_bps: float = 2.0
    chi_dB: float = 6.0
    sigma_c_dBm: float = -120.0
    sigma_S_dBm: float = -110.0
    T: int = 1024
    seed: int = 0

    def with_updates(self, **changes) -> "ScenarioConfig":
        converted = {}
        for key, value in changes.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r}")
            converted[key] = _convert(key, value)
        return replace(self, **converted)


DESK = ScenarioConfig()
FULL_SCALE = ScenarioConfig(
    M=8, N=20, K_c=2, K_t=2, L=6, gamma_bps=4.0, chi_dB=12.0,
)

_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_TUPLE_LEN = {"bs_xyz": 3, "irs_xyz": 3, "cu_region": 4}


def _convert(key, value):
    kind = _FIELD_TYPES[key]
    if kind == "tuple":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        out = tuple(float(v) for v in value)
        if len(out) != _TUPLE_LEN[key]:
            raise ValueError(f"expected {_TUPLE_LEN[key]} numbers")
        return out
    if kind == "int":
        f = float(value)
        if f != int(f):
            raise ValueError("expected an integer")
        return int(f)
    return float(value)


def parse_config(text: str, base: ScenarioConfig = DESK) -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return replace(base, **values)


def load_config(path, base: ScenarioConfig = DESK) -> ScenarioConfig:
    return parse_config(Path(path).read_text(), base)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def _cn(rng, var, size):
    scale = np.sqrt(np.asarray(var) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def generate_scenario(config: ScenarioConfig, seed: int | None = None) -> Scenario:
    """Draw a random channel realization for ``config``.

    The number of random draws does not depend on ``N``, ``a``, ``A`` or the
    thresholds, so sweeping those keeps the same channels for a given seed.
    """
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    c = config
    wavelength = SPEED_OF_LIGHT / (c.carrier_GHz * 1e9)
    bs, irs = np.array(c.bs_xyz), np.array(c.irs_xyz)
    x0, x1, y0, y1 = c.cu_region

    def box(count):
        xy = np.column_stack([rng.uniform(x0, x1, count), rng.uniform(y0, y1, count)])
        return np.column_stack([xy, np.zeros(count)])

    cu_xyz = box(c.K_c)
    target_xyz = box(c.K_t)
    mu_G = path_gain(np.linalg.norm(irs - bs))
    mu_k = path_gain(np.linalg.norm(cu_xyz - irs, axis=1))
    sigma_G = _cn(rng, mu_G / c.L, c.L)
    sigma_f = _cn(rng, (mu_k / c.L)[:, None], (c.K_c, c.L))

    phi_t = rng.uniform(0, np.pi, c.L)
    theta_r, phi_r = rng.uniform(0, np.pi, (2, c.L))
    theta_I, phi_I = rng.uniform(0, np.pi, (2, c.K_t))
    phi_B = rng.uniform(0, np.pi, c.K_t)

    return Scenario(
        M=c.M, N=c.N, a=c.a, K_c=c.K_c, K_t=c.K_t, L=c.L,
        A=c.A_over_lambda * wavelength,
        wavelength=wavelength,
        b=np.arange(c.M) * wavelength / 2.0,
        sigma_G=sigma_G,
        sigma_f=sigma_f,
        rho_t=np.cos(phi_t),
        rho_r=np.column_stack([np.sin(theta_r) * np.cos(phi_r), np.cos(theta_r)]),
        rho_I=np.column_stack([np.sin(theta_I) * np.cos(phi_I), np.cos(theta_I)]),
        rho_B=np.cos(phi_B),
        alpha_d=path_gain(np.linalg.norm(target_xyz - bs, axis=1)),
        alpha_r=path_gain(np.linalg.norm(target_xyz - irs, axis=1)),
        rcs=np.ones(c.K_t),
        gamma=np.full(c.K_c, c.gamma_bps),
        chi=np.full(c.K_t, 10.0 ** (c.chi_dB / 10.0)),
        sigma_c2=np.full(c.K_c, float(dbm_to_watts(c.sigma_c_dBm))),
        sigma_S2=float(dbm_to_watts(c.sigma_S_dBm)),
        T=c.T,
    )
