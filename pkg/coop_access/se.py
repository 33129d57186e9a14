"""
State Evolution Module - scalar variance recursion for the channel estimator

Tracks one averaged variance per (frame, virtual AP). The denoiser
expectation has no closed form under the Bernoulli-Gaussian prior with
per-user activity priors, so it is evaluated by Monte-Carlo sampling with
the activity priors taken from a coupled run of the detector.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from coop_access.inference import IterationSnapshot, bg_denoiser, to_db
from coop_access.netgen import NetworkLayout
from coop_access.phy import complex_gaussian
from coop_access.traffic import MarkovActivityParams

logger = logging.getLogger(__name__)

DEFAULT_SE_SAMPLES = 100_000


@dataclass
class SeState:
    """Averaged variances per (frame, virtual AP)"""
    nu_x_bar: np.ndarray          # (T_w, V)
    set_sizes: np.ndarray         # (V,) |N_v|
    initial_energy: float
    iteration: int = 0
    nu_p: Optional[np.ndarray] = None
    nu_z: Optional[np.ndarray] = None
    nu_r_bar: Optional[np.ndarray] = None

    def total_mse(self) -> float:
        """Sum over frames and virtual APs of |N_v| * nu_x_bar"""
        weighted = self.nu_x_bar * self.set_sizes[None, :]
        return float(np.nansum(weighted))

    def predicted_nmse_db(self) -> float:
        if self.initial_energy <= 0.0:
            return float('nan')
        return to_db(self.total_mse() / self.initial_energy)


@dataclass
class SeRecord:
    """One row of the predicted-versus-measured comparison"""
    iteration: int
    predicted_nmse_db: float
    measured_nmse_db: float
    measured_mse_db: float

    def as_row(self) -> dict:
        return {
            'iteration': self.iteration,
            'predicted_nmse_db': f"{self.predicted_nmse_db:.10g}",
            'measured_nmse_db': f"{self.measured_nmse_db:.10g}",
            'measured_mse_db': f"{self.measured_mse_db:.10g}",
        }


def _effective_gains(layout: NetworkLayout, tx_power: float, antennas: int):
    ap_of_v = np.arange(layout.n_aps * antennas) // antennas
    return tx_power * layout.g_lin[:, ap_of_v], layout.coop_mask[:, ap_of_v]


def se_init(layout: NetworkLayout, params: MarkovActivityParams, tx_power: float,
            window_size: int, antennas: int = 1) -> SeState:
    """
    Prior variances: mean over the users of each AP of p_n * rho0 * g_lin.

    Virtual APs without users get nan and are left out of the MSE.
    """
    g_eff, mask = _effective_gains(layout, tx_power, antennas)
    p_n = params.arrays(layout.n_users)[2]
    sizes = mask.sum(axis=0)
    prior = np.where(mask, p_n[:, None] * g_eff, 0.0).sum(axis=0)
    with np.errstate(invalid='ignore', divide='ignore'):
        nu_x = np.where(sizes > 0, prior / np.maximum(sizes, 1), np.nan)
    empty = int(np.sum(sizes == 0))
    if empty:
        logger.warning(f"{empty} virtual APs have no users; their state is undefined")
    nu_x_bar = np.tile(nu_x, (window_size, 1))
    energy = float(np.nansum(nu_x_bar * sizes[None, :]))
    return SeState(nu_x_bar=nu_x_bar, set_sizes=sizes, initial_energy=energy)


def se_step(state: SeState, layout: NetworkLayout, phi_right: np.ndarray, sigma_eff_sq,
            pilot_length: int, tx_power: float, params: MarkovActivityParams,
            antennas: int = 1, samples: int = DEFAULT_SE_SAMPLES, seed: int = 0,
            activity: Optional[np.ndarray] = None,
            nu_z_measured: Optional[np.ndarray] = None) -> SeState:
    """
    Advance the recursion by one iteration.

    Args:
        state: Current state
        layout: Network layout
        phi_right: (T_w, N, V) activity priors of the coupled run at this iteration
        sigma_eff_sq: Effective noise of that iteration, scalar or (V,)
        pilot_length: L
        tx_power: rho0 in linear units
        params: Markov parameters (for Bernoulli activity when no truth is given)
        antennas: M
        samples: Monte-Carlo draws per (frame, virtual AP)
        seed: Base seed; each (iteration, frame, virtual AP) has its own stream
        activity: Optional (N, T_w) true activity of the coupled trial
        nu_z_measured: Optional (T_w, V) measured mean nu_z (quantized output)

    Returns:
        New SeState
    """
    g_eff, mask = _effective_gains(layout, tx_power, antennas)
    T_w, V = state.nu_x_bar.shape
    sigma = np.broadcast_to(np.asarray(sigma_eff_sq, dtype=float), (V,))
    p_n = params.arrays(layout.n_users)[2]
    iteration = state.iteration + 1

    nu_p = state.set_sizes[None, :] / pilot_length * state.nu_x_bar
    if nu_z_measured is None:
        nu_z = nu_p * sigma[None, :] / (nu_p + sigma[None, :])
        nu_r = nu_p + sigma[None, :]
    else:
        nu_z = np.minimum(np.asarray(nu_z_measured, dtype=float), nu_p)
        with np.errstate(divide='ignore'):
            nu_r = nu_p ** 2 / (nu_p - nu_z)

    nu_x_new = np.full_like(state.nu_x_bar, np.nan)
    for v in range(V):
        users = np.flatnonzero(mask[:, v])
        if users.size == 0:
            continue
        draws = max(1, samples // users.size)
        g = g_eff[users, v][:, None]
        for t in range(T_w):
            rng = np.random.default_rng([seed, iteration, t, v])
            if activity is not None:
                active = np.broadcast_to(activity[users, t][:, None], (users.size, draws))
            else:
                active = rng.random((users.size, draws)) < p_n[users][:, None]
            x0 = active * complex_gaussian(rng, (users.size, draws), g)
            r = x0 + complex_gaussian(rng, (users.size, draws), nu_r[t, v])
            prior = phi_right[t, users, v][:, None]
            _, nu_x, _ = bg_denoiser(r, nu_r[t, v], g, prior)
            nu_x_new[t, v] = float(np.mean(nu_x))

    return SeState(nu_x_bar=nu_x_new, set_sizes=state.set_sizes, initial_energy=state.initial_energy,
                   iteration=iteration, nu_p=nu_p, nu_z=nu_z, nu_r_bar=nu_r)


def se_run(layout: NetworkLayout, params: MarkovActivityParams, snapshots: Sequence[IterationSnapshot],
           pilot_length: int, tx_power: float, antennas: int = 1,
           samples: int = DEFAULT_SE_SAMPLES, seed: int = 0,
           activity: Optional[np.ndarray] = None, quantized: bool = False) -> List[SeRecord]:
    """
    Drive the recursion with the snapshots of a coupled detector run.

    Returns:
        One record per iteration, iteration 0 being the 0 dB prior reference
    """
    if not snapshots:
        raise ValueError("at least one snapshot is required")
    if quantized:
        logger.info("State evolution with quantized output uses measured nu_z (experimental)")

    window_size = snapshots[0].phi_right.shape[0]
    state = se_init(layout, params, tx_power, window_size, antennas)
    records = [SeRecord(0, state.predicted_nmse_db(), 0.0, 0.0)]
    for snapshot in snapshots:
        state = se_step(state, layout, snapshot.phi_right, snapshot.sigma_eff_sq, pilot_length,
                        tx_power, params, antennas=antennas, samples=samples, seed=seed,
                        activity=activity,
                        nu_z_measured=snapshot.nu_z_mean if quantized else None)
        mse_ratio = snapshot.error_energy / state.initial_energy if state.initial_energy > 0 else np.nan
        records.append(SeRecord(
            iteration=snapshot.iteration,
            predicted_nmse_db=state.predicted_nmse_db(),
            measured_nmse_db=snapshot.nmse_db,
            measured_mse_db=to_db(mse_ratio) if np.isfinite(mse_ratio) else float('nan'),
        ))
    return records


__all__ = ['SeState', 'SeRecord', 'se_init', 'se_step', 'se_run', 'DEFAULT_SE_SAMPLES']
