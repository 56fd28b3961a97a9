"""Field-response channel model for the movable IRS.

Positions are 2-D coordinates in the local plane of the IRS region and are
stored flat as ``[x_1, y_1, x_2, y_2, ...]``. Array-wise control places an
``a x a`` half-wavelength sub-array around each controllable center; ``a = 1``
is element-wise control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    Angles are stored as direction data (cosines), powers and gains in linear
    units, lengths in meters.
    """

    M: int
    N: int
    a: int
    K_c: int
    K_t: int
    L: int
    A: float
    wavelength: float
    b: np.ndarray  # (M,) BS antenna positions
    sigma_G: np.ndarray  # (L,) BS-IRS path responses
    sigma_f: np.ndarray  # (K_c, L) IRS-CU path responses
    rho_t: np.ndarray  # (L,) departure cosines at the BS
    rho_r: np.ndarray  # (L, 2) arrival direction data at the IRS
    rho_I: np.ndarray  # (K_t, 2) target directions seen from the IRS
    rho_B: np.ndarray  # (K_t,) target directions seen from the BS
    alpha_d: np.ndarray  # (K_t,) BS-target power gains
    alpha_r: np.ndarray  # (K_t,) IRS-target power gains
    rcs: np.ndarray  # (K_t,)
    gamma: np.ndarray  # (K_c,) rate thresholds, bits/s/Hz
    chi: np.ndarray  # (K_t,) SINR thresholds, linear
    sigma_c2: np.ndarray  # (K_c,) watts
    sigma_S2: float  # watts
    T: int

    def __post_init__(self):
        if self.a < 1:
            raise ValueError("array granularity a must be >= 1")
        if self.N % (self.a * self.a):
            raise ValueError(f"N={self.N} is not divisible by a^2={self.a * self.a}")
        if self.L < 1:
            raise ValueError("need at least one propagation path")
        if self.sigma_S2 <= 0 or np.any(np.asarray(self.sigma_c2) <= 0):
            raise ValueError("noise powers must be positive")

    @property
    def n_ctrl(self) -> int:
        """Number of independently movable centers (N / a^2)."""
        return self.N // (self.a * self.a)

    @property
    def J(self) -> int:
        """Number of beamformer columns, K_c + M."""
        return self.K_c + self.M

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    @property
    def d_min(self) -> float:
        return min_distance(self.a, self.wavelength)

    def with_updates(self, **changes) -> "Scenario":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields.update(changes)
        return Scenario(**fields)


@dataclass(frozen=True)
class ChannelSet:
    """All channels induced by one set of element positions and phases.

    ``h_C[k]`` and ``h_S[k]`` are column vectors; the physical rows are their
    conjugate transposes. ``H_S[k] = conj(h_S[k]) h_S[k]^H``.
    """

    G: np.ndarray  # (N, M)
    f: np.ndarray  # (K_c, N)
    h_C: np.ndarray  # (K_c, M)
    h_d: np.ndarray  # (K_t, M)
    h_r: np.ndarray  # (K_t, N)
    h_S: np.ndarray  # (K_t, M)
    H_S: np.ndarray  # (K_t, M, M)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def position_projection(u_raw, A: float) -> np.ndarray:
    """Map raw coordinates into the open square ``(0, A)`` via ``A * sigmoid``."""
    if A <= 0:
        raise ValueError("region edge A must be positive")
    return A * sigmoid(u_raw)


def inverse_position_projection(u, A: float, clamp: float = 30.0) -> np.ndarray:
    """Raw coordinates whose projection is ``u``, clamped to ``|u_raw| <= clamp``."""
    s = np.clip(np.asarray(u, dtype=float) / A, 1e-300, 1.0)
    with np.errstate(divide="ignore"):
        raw = np.log(s) - np.log1p(-s)
    return np.clip(raw, -clamp, clamp)


def array_offsets(a: int, wavelength: float) -> np.ndarray:
    """Element offsets from an array center, rows then columns, shape (a^2, 2)."""
    idx = np.arange(1, a + 1)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    dx = wavelength * (2 * j - a - 1) / 4.0
    dy = wavelength * (-2 * i + a + 1) / 4.0
    return np.stack([dx.ravel(), dy.ravel()], axis=1)


def expand_array_positions(u, a: int, N: int, wavelength: float) -> np.ndarray:
    """Element positions (flat, length 2N) for the array centers ``u`` (flat, 2N/a^2)."""
    if a < 1 or N % (a * a):
        raise ValueError(f"N={N} must be divisible by a^2 with a >= 1 (a={a})")
    u = np.asarray(u, dtype=float)
    if u.size != 2 * N // (a * a):
        raise ValueError(f"expected {2 * N // (a * a)} center coordinates, got {u.size}")
    if a == 1:
        return u.copy()
    centers = u.reshape(-1, 1, 2)
    return (centers + array_offsets(a, wavelength)[None]).reshape(-1)


def min_distance(a: int, wavelength: float) -> float:
    """Minimum center spacing keeping every cross-array element pair >= lambda/2."""
    if a < 1:
        raise ValueError("array granularity a must be >= 1")
    return (np.sqrt(2.0) * (a - 1) + 2.0) / 4.0 * wavelength


def _as_xy(positions) -> np.ndarray:
    return np.asarray(positions, dtype=float).reshape(-1, 2)


def arrival_frm(positions, scenario: Scenario) -> np.ndarray:
    """Arrival field-response matrix F_a(t), shape (L, N)."""
    t = _as_xy(positions)
    return np.exp(1j * scenario.wavenumber * (scenario.rho_r @ t.T))


def bs_frm(scenario: Scenario) -> np.ndarray:
    """BS field-response matrix G_t(b), shape (L, M)."""
    return np.exp(1j * scenario.wavenumber * np.outer(scenario.rho_t, scenario.b))


def build_bs_irs_channel(positions, scenario: Scenario) -> np.ndarray:
    """``G = F_a(t)^H diag(sigma_G) G_t(b)``, shape (N, M)."""
    Fa = arrival_frm(positions, scenario)
    return (Fa.conj().T * scenario.sigma_G) @ bs_frm(scenario)


def build_irs_cu_channels(positions, scenario: Scenario) -> np.ndarray:
    """``f_k = F_d(t)^H sigma_f,k``, one row per CU, shape (K_c, N)."""
    Fd = np.conj(arrival_frm(positions, scenario))  # specular: negated phase
    return scenario.sigma_f @ Fd.conj()


def bs_steering(scenario: Scenario) -> np.ndarray:
    """BS steering vectors toward the targets, shape (K_t, M)."""
    return np.exp(1j * scenario.wavenumber * np.outer(scenario.rho_B, scenario.b))


def irs_steering(positions, scenario: Scenario) -> np.ndarray:
    """IRS steering vectors toward the targets, shape (K_t, N)."""
    t = _as_xy(positions)
    return np.exp(1j * scenario.wavenumber * (scenario.rho_I @ t.T))


def build_cascaded_channels(phi, positions, scenario: Scenario) -> ChannelSet:
    """Every channel of the system at element positions ``positions`` and phases ``phi``."""
    phi = np.asarray(phi, dtype=complex)
    G = build_bs_irs_channel(positions, scenario)
    f = build_irs_cu_channels(positions, scenario)
    # h_C,k^H = phi^H diag(f_k^H) G
    rows_c = (np.conj(phi)[None, :] * np.conj(f)) @ G
    h_d = np.sqrt(scenario.alpha_d)[:, None] * bs_steering(scenario)
    h_r = np.sqrt(scenario.alpha_r)[:, None] * irs_steering(positions, scenario)
    rows_s = np.conj(h_d) + (np.conj(phi)[None, :] * np.conj(h_r)) @ G
    H_S = rows_s[:, :, None] * rows_s[:, None, :]
    return ChannelSet(
        G=G,
        f=f,
        h_C=np.conj(rows_c),
        h_d=h_d,
        h_r=h_r,
        h_S=np.conj(rows_s),
        H_S=H_S,
    )


def element_positions(u_raw, scenario: Scenario) -> np.ndarray:
    """Raw optimization coordinates -> flat element positions."""
    centers = position_projection(u_raw, scenario.A)
    return expand_array_positions(centers, scenario.a, scenario.N, scenario.wavelength)


def path_gain(distance) -> np.ndarray:
    """Free-space power gain ``-38 - 20 log10(d)`` dB, as a linear ratio."""
    return 10.0 ** ((-38.0 - 20.0 * np.log10(distance)) / 10.0)
