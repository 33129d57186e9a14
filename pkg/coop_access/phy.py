"""
Physical Layer Module - pilots, channels and received signals

Each antenna of an AP is treated as a virtual single-antenna AP; virtual AP
v = u * M + m belongs to physical AP u. All users contribute to every
received signal; cooperation sets only restrict inference.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from coop_access.netgen import NetworkLayout
from coop_access.traffic import ActivityTrace

logger = logging.getLogger(__name__)

THERMAL_NOISE_DBM_HZ = -174.0
DEFAULT_BANDWIDTH_HZ = 10e6
DEFAULT_RHO0_DBM = 13.0


def dbm_to_mw(dbm):
    """Convert dBm to linear milliwatts"""
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    """Convert linear milliwatts to dBm"""
    return 10.0 * np.log10(np.asarray(mw, dtype=float))


@dataclass(frozen=True)
class SystemParams:
    """Transmit power, noise and antenna settings (linear scale is mW)"""
    rho0_dbm: float = DEFAULT_RHO0_DBM
    noise_psd_dbm_hz: float = THERMAL_NOISE_DBM_HZ
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    antennas_per_ap: int = 1
    noise_var_override_mw: Optional[float] = None

    @property
    def rho0_mw(self) -> float:
        return float(dbm_to_mw(self.rho0_dbm))

    @property
    def noise_dbm(self) -> float:
        return self.noise_psd_dbm_hz + 10.0 * np.log10(self.bandwidth_hz)

    @property
    def noise_var_mw(self) -> float:
        if self.noise_var_override_mw is not None:
            return float(self.noise_var_override_mw)
        return float(dbm_to_mw(self.noise_dbm))

    def validate(self) -> list:
        errors = []
        if self.antennas_per_ap < 1:
            errors.append(f"antennas_per_ap must be >= 1, got {self.antennas_per_ap}")
        if self.bandwidth_hz <= 0:
            errors.append(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")
        if self.noise_var_override_mw is not None and self.noise_var_override_mw < 0:
            errors.append("noise_var_override_mw must be non-negative")
        return errors


@dataclass(frozen=True, eq=False)
class PilotMatrix:
    """Pilot signatures, one column per user"""
    a: np.ndarray

    @property
    def pilot_length(self) -> int:
        return int(self.a.shape[0])

    @property
    def n_users(self) -> int:
        return int(self.a.shape[1])


@dataclass(frozen=True, eq=False)
class FrameSignals:
    """True effective channels and received signals for every frame"""
    x_true: np.ndarray      # (T, N, V)
    y: np.ndarray           # (T, L, V)
    z: np.ndarray           # (T, L, V)
    pilots: PilotMatrix
    noise_var: float
    tx_power: float
    antennas_per_ap: int = 1

    @property
    def n_frames(self) -> int:
        return int(self.y.shape[0])

    @property
    def n_virtual_aps(self) -> int:
        return int(self.y.shape[2])

    def ap_of_virtual(self) -> np.ndarray:
        """Physical AP index of every virtual AP"""
        return np.arange(self.n_virtual_aps) // self.antennas_per_ap

    def virtual_columns(self, u: int) -> np.ndarray:
        """Virtual AP columns belonging to physical AP u"""
        m = self.antennas_per_ap
        return np.arange(u * m, (u + 1) * m)

    def restrict_to_ap(self, u: int) -> 'FrameSignals':
        """Signals seen by physical AP u only"""
        cols = self.virtual_columns(u)
        return FrameSignals(
            x_true=self.x_true[:, :, cols],
            y=self.y[:, :, cols],
            z=self.z[:, :, cols],
            pilots=self.pilots,
            noise_var=self.noise_var,
            tx_power=self.tx_power,
            antennas_per_ap=self.antennas_per_ap,
        )


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples"""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_pilots(L: int, N: int, seed: int) -> PilotMatrix:
    """
    I.i.d. CN(0, 1/L) pilot matrix.

    Args:
        L: Pilot length
        N: Number of users
        seed: RNG seed

    Returns:
        PilotMatrix of shape (L, N)
    """
    if L < 1 or N < 1:
        raise ValueError(f"pilot dimensions must be positive, got L={L}, N={N}")
    rng = np.random.default_rng(seed)
    return PilotMatrix(a=complex_gaussian(rng, (L, N), 1.0 / L))


def orthonormal_pilots(L: int, N: int) -> PilotMatrix:
    """Unitary DFT columns (requires L >= N); |a_ln|^2 = 1/L for all entries"""
    if L < N:
        raise ValueError(f"orthonormal pilots need L >= N, got L={L}, N={N}")
    rows = np.arange(L)[:, None]
    cols = np.arange(N)[None, :]
    return PilotMatrix(a=np.exp(-2j * np.pi * rows * cols / L) / np.sqrt(L))


def synthesize_frames(layout: NetworkLayout, trace: ActivityTrace, pilots: PilotMatrix,
                      sys: SystemParams, seed: int) -> FrameSignals:
    """
    Draw block-fading channels and received signals y = A x + w.

    Channel and noise of frame t at antenna m of AP u come from a stream
    seeded by (seed, t, u, m); x = sqrt(rho0) * lambda * h with
    h ~ CN(0, g_lin[n, u]).
    """
    n_users, n_frames = trace.lam.shape
    if layout.n_users != n_users or pilots.n_users != n_users:
        raise ValueError(f"dimension mismatch: layout N={layout.n_users}, trace N={n_users}, "
                         f"pilots N={pilots.n_users}")

    M = sys.antennas_per_ap
    V = layout.n_aps * M
    L = pilots.pilot_length
    rho0 = sys.rho0_mw
    noise_var = sys.noise_var_mw

    x_true = np.zeros((n_frames, n_users, V), dtype=complex)
    noise = np.zeros((n_frames, L, V), dtype=complex)
    for t in range(n_frames):
        active = trace.lam[:, t]
        for u in range(layout.n_aps):
            for m in range(M):
                rng = np.random.default_rng([seed, t, u, m])
                h = complex_gaussian(rng, n_users, layout.g_lin[:, u])
                w = complex_gaussian(rng, L, noise_var)
                v = u * M + m
                x_true[t, :, v] = np.sqrt(rho0) * active * h
                noise[t, :, v] = w

    z = np.matmul(pilots.a, x_true)
    y = z + noise
    logger.debug(f"Synthesized {n_frames} frames over {V} virtual APs")
    return FrameSignals(x_true=x_true, y=y, z=z, pilots=pilots, noise_var=noise_var,
                        tx_power=rho0, antennas_per_ap=M)


def effective_noise_power(layout: NetworkLayout, sys: SystemParams, u: int,
                          p_a: float, pilot_length: int) -> float:
    """
    Noise plus out-of-set interference power per pilot symbol at AP u.

    Returns:
        sigma_w^2 + sum over n not in N_u of p_a * rho0 * g[n, u] / L
    """
    if not 0 <= u < layout.n_aps:
        raise ValueError(f"AP index {u} out of range")
    outside = ~layout.coop_mask[:, u]
    p_n = np.broadcast_to(np.asarray(p_a, dtype=float), (layout.n_users,))
    interference = np.sum(p_n[outside] * sys.rho0_mw * layout.g_lin[outside, u]) / pilot_length
    return sys.noise_var_mw + float(interference)


def quantizer_input_std(layout: NetworkLayout, sys: SystemParams, u: int,
                        p_a, pilot_length: int) -> float:
    """Per-component standard deviation of a received sample at AP u"""
    p_n = np.broadcast_to(np.asarray(p_a, dtype=float), (layout.n_users,))
    power = np.sum(p_n * sys.rho0_mw * layout.g_lin[:, u]) / pilot_length + sys.noise_var_mw
    return float(np.sqrt(power / 2.0))


__all__ = [
    'SystemParams',
    'PilotMatrix',
    'FrameSignals',
    'gen_pilots',
    'orthonormal_pilots',
    'synthesize_frames',
    'effective_noise_power',
    'quantizer_input_std',
    'dbm_to_mw',
    'mw_to_dbm',
    'complex_gaussian',
]
