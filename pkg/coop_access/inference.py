"""
Inference Module - sliding-window activity detection and channel estimation

Each iteration refines activity beliefs (product over cooperating APs,
forward/backward sweeps over the Markov chain, extrinsic per-AP priors),
runs one GAMP pass per (frame, virtual AP) with a Bernoulli-Gaussian
denoiser, and re-learns the effective noise by EM. Probabilities are kept
in [eps_p, 1 - eps_p] and multi-factor products are taken in the logit
domain.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from coop_access.core.models import DetectionMode, InferenceConfig
from coop_access.netgen import NetworkLayout
from coop_access.phy import FrameSignals
from coop_access.traffic import MarkovActivityParams
from coop_access.window import WindowSpec

logger = logging.getLogger(__name__)

NMSE_FLOOR_DB = -200.0
PRECISION_FLOOR = 1e-300


def logit(p):
    """log(p / (1 - p)); +-inf at the end points"""
    with np.errstate(divide='ignore'):
        return np.log(p) - np.log1p(-p)


def clamp(p, eps: float):
    return np.clip(p, eps, 1.0 - eps)


def combine_pair(a, b):
    """Normalized product of two binary beliefs: ab / ((1-a)(1-b) + ab)"""
    both = a * b
    return both / ((1.0 - a) * (1.0 - b) + both)


def to_db(ratio: float) -> float:
    if ratio <= 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


# ---------------------------------------------------------------------------
# Activity refinement
# ---------------------------------------------------------------------------

def combine_ap_evidence(phi_left: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Combine per-AP activity evidence into one likelihood per (frame, user).

    Args:
        phi_left: (..., N, V) channel-to-activity messages
        mask: Optional (N, V) cooperation mask; excluded entries are ignored

    Returns:
        (..., N) combined probabilities
    """
    logits = logit(phi_left)
    if mask is not None:
        logits = np.where(mask, logits, 0.0)
    return expit(logits.sum(axis=-1))


def forward_sweep(pi_left: np.ndarray, alpha_n: np.ndarray, beta_n: np.ndarray,
                  p_n: np.ndarray, eps_p: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """
    Forward chain messages over the window.

    Returns:
        (psi_right, varphi_left), both (T_w, N)
    """
    T = pi_left.shape[0]
    psi_right = np.empty_like(pi_left)
    varphi_left = np.empty_like(pi_left)
    psi_right[0] = clamp(p_n, eps_p)
    for t in range(T):
        if t > 0:
            psi_right[t] = clamp(alpha_n + (beta_n - alpha_n) * varphi_left[t - 1], eps_p)
        varphi_left[t] = clamp(combine_pair(pi_left[t], psi_right[t]), eps_p)
    # no successor frame inside the window
    varphi_left[T - 1] = clamp(pi_left[T - 1], eps_p)
    return psi_right, varphi_left


def backward_sweep(pi_left: np.ndarray, alpha_n: np.ndarray, beta_n: np.ndarray,
                   eps_p: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """
    Backward chain messages over the window, last frame first.

    Returns:
        (psi_left, varphi_right), both (T_w, N)
    """
    T = pi_left.shape[0]
    psi_left = np.empty_like(pi_left)
    varphi_right = np.empty_like(pi_left)
    varphi_right[T - 1] = 0.5
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            psi_next = psi_left[t + 1]
            stays = (1.0 - beta_n) * (1.0 - psi_next) + beta_n * psi_next
            wakes = (1.0 - alpha_n) * (1.0 - psi_next) + alpha_n * psi_next
            varphi_right[t] = clamp(stays / (stays + wakes), eps_p)
        psi_left[t] = clamp(combine_pair(pi_left[t], varphi_right[t]), eps_p)
    return psi_left, varphi_right


def temporal_prior(psi_right: np.ndarray, varphi_right: np.ndarray, eps_p: float = 1e-12) -> np.ndarray:
    """Activity prior of each frame from both chain directions"""
    return clamp(combine_pair(psi_right, varphi_right), eps_p)


def per_ap_prior(pi_right: np.ndarray, phi_left: np.ndarray, mask: Optional[np.ndarray] = None,
                 eps_p: float = 1e-12) -> np.ndarray:
    """
    Extrinsic activity prior for every cooperating AP.

    phi_right[..., n, v] combines pi_right[..., n] with the evidence of all
    other cooperating APs of user n (AP v itself excluded).
    """
    logits = logit(phi_left)
    if mask is not None:
        logits = np.where(mask, logits, 0.0)
    total = logits.sum(axis=-1, keepdims=True)
    return clamp(expit(logit(pi_right)[..., None] + (total - logits)), eps_p)


@dataclass
class BeliefState:
    """Activity messages of one window, all clamped to [eps_p, 1 - eps_p]"""
    phi_left: np.ndarray      # (T_w, N, V)
    phi_right: np.ndarray     # (T_w, N, V)
    pi_left: np.ndarray       # (T_w, N)
    pi_right: np.ndarray      # (T_w, N)
    psi_right: np.ndarray
    psi_left: np.ndarray
    varphi_left: np.ndarray
    varphi_right: np.ndarray

    def all_within(self, eps_p: float) -> bool:
        """True when every message lies in [eps_p, 1 - eps_p]"""
        arrays = (self.phi_left, self.phi_right, self.pi_left, self.pi_right,
                  self.psi_right, self.psi_left, self.varphi_left, self.varphi_right)
        return all(np.all((a >= eps_p) & (a <= 1.0 - eps_p)) for a in arrays)


def refine_activity(phi_left: np.ndarray, mask: np.ndarray, alpha_n: np.ndarray,
                    beta_n: np.ndarray, p_n: np.ndarray, eps_p: float = 1e-12) -> BeliefState:
    """One full activity-refinement pass in the detector's line order"""
    pi_left = clamp(combine_ap_evidence(phi_left, mask), eps_p)
    psi_right, varphi_left = forward_sweep(pi_left, alpha_n, beta_n, p_n, eps_p)
    psi_left, varphi_right = backward_sweep(pi_left, alpha_n, beta_n, eps_p)
    pi_right = temporal_prior(psi_right, varphi_right, eps_p)
    phi_right = per_ap_prior(pi_right, phi_left, mask, eps_p)
    return BeliefState(phi_left=phi_left, phi_right=phi_right, pi_left=pi_left,
                       pi_right=pi_right, psi_right=psi_right, psi_left=psi_left,
                       varphi_left=varphi_left, varphi_right=varphi_right)


def fuse_llr(pi_left, psi_right, varphi_right) -> np.ndarray:
    """Posterior log-odds of activity from the three converged messages"""
    return logit(pi_left) + logit(psi_right) + logit(varphi_right)


# ---------------------------------------------------------------------------
# GAMP channel estimation
# ---------------------------------------------------------------------------

def gamp_linear_step(a: np.ndarray, x_hat: np.ndarray, nu_x: np.ndarray, s_hat_prev: np.ndarray,
                     a_abs2: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Onsager-corrected plug-in estimate of the noiseless signal.

    Args:
        a: (L, N) pilots
        x_hat, nu_x: (..., N, V) current estimates and variances
        s_hat_prev: (..., L, V) previous residual

    Returns:
        (p_hat, nu_p), both (..., L, V)
    """
    if a_abs2 is None:
        a_abs2 = np.abs(a) ** 2
    nu_p = np.matmul(a_abs2, nu_x)
    p_hat = np.matmul(a, x_hat) - nu_p * s_hat_prev
    return p_hat, nu_p


def residual_step(z_hat, nu_z, p_hat, nu_p) -> Tuple[np.ndarray, np.ndarray]:
    """Scaled residual and its variance from output-channel posteriors"""
    s_hat = (z_hat - p_hat) / nu_p
    nu_s = (1.0 - nu_z / nu_p) / nu_p
    return s_hat, nu_s


def gaussian_output_step(p_hat, nu_p, y, sigma_eff_sq, nu_floor: float = 1e-18):
    """
    Posterior of z under the additive Gaussian channel, then the residual.

    Returns:
        (z_hat, nu_z, s_hat, nu_s)
    """
    nu_p = np.maximum(nu_p, nu_floor)
    total = nu_p + sigma_eff_sq
    z_hat = (nu_p * y + sigma_eff_sq * p_hat) / total
    nu_z = nu_p * sigma_eff_sq / total
    s_hat, nu_s = residual_step(z_hat, nu_z, p_hat, nu_p)
    return z_hat, nu_z, s_hat, nu_s


def gamp_input_step(a: np.ndarray, x_hat: np.ndarray, s_hat: np.ndarray, nu_s: np.ndarray,
                    a_abs2: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Denoiser input r_hat and its variance nu_r"""
    if a_abs2 is None:
        a_abs2 = np.abs(a) ** 2
    precision = np.matmul(a_abs2.T, nu_s)
    nu_r = 1.0 / np.maximum(precision, PRECISION_FLOOR)
    r_hat = x_hat + nu_r * np.matmul(a.conj().T, s_hat)
    return r_hat, nu_r


def bg_denoiser(r_hat, nu_r, g_eff, phi_right):
    """
    MMSE denoiser for the Bernoulli-Gaussian prior.

    Args:
        r_hat: Denoiser input
        nu_r: Input noise variance (> 0)
        g_eff: Prior variance of an active channel, rho0 * g_lin (> 0)
        phi_right: Prior activity probability

    Returns:
        (x_hat, nu_x, phi_left_next)
    """
    abs2 = np.abs(r_hat) ** 2
    total = nu_r + g_eff
    xi = g_eff * abs2 / (nu_r * total)
    log_ratio = np.log(nu_r / total)
    posterior = expit(logit(phi_right) + log_ratio + xi)
    shrink = g_eff / total
    gamma = shrink * r_hat
    nu_gamma = nu_r * shrink
    x_hat = posterior * gamma
    nu_x = posterior * ((1.0 - posterior) * np.abs(gamma) ** 2 + nu_gamma)
    phi_left_next = expit(log_ratio + xi)
    return x_hat, nu_x, phi_left_next


def em_noise_update(y: np.ndarray, z_hat: np.ndarray, nu_z: np.ndarray) -> np.ndarray:
    """Effective noise per virtual AP, averaged over the window and pilot rows"""
    return np.mean(np.abs(y - z_hat) ** 2 + nu_z, axis=(0, 1))


# ---------------------------------------------------------------------------
# Window engine
# ---------------------------------------------------------------------------

@dataclass
class GampState:
    """GAMP variables of one window"""
    x_hat: np.ndarray
    nu_x: np.ndarray
    s_hat: np.ndarray
    nu_s: np.ndarray
    p_hat: np.ndarray
    nu_p: np.ndarray
    z_hat: np.ndarray
    nu_z: np.ndarray
    r_hat: np.ndarray
    nu_r: np.ndarray
    sigma_eff_sq: np.ndarray


@dataclass
class IterationSnapshot:
    """Per-iteration diagnostics passed to the trace hook"""
    iteration: int
    nmse_db: float
    relative_change: float
    sigma_eff_sq: np.ndarray      # (V,) value used in this iteration
    mean_pi_left: float
    mean_pi_right: float
    mean_phi_left: float
    phi_right: np.ndarray         # (T_w, N, V) prior used by the denoiser
    nu_z_mean: np.ndarray         # (T_w, V)
    error_energy: float = float('nan')
    true_energy: float = float('nan')

    def as_row(self) -> dict:
        return {
            'iteration': self.iteration,
            'nmse_db': f"{self.nmse_db:.10g}",
            'relative_change': f"{self.relative_change:.10g}",
            'sigma_eff_sq_mean': f"{float(np.mean(self.sigma_eff_sq)):.10g}",
            'mean_pi_left': f"{self.mean_pi_left:.10g}",
            'mean_pi_right': f"{self.mean_pi_right:.10g}",
            'mean_phi_left': f"{self.mean_phi_left:.10g}",
        }


TraceHook = Callable[[IterationSnapshot], None]


@dataclass
class DetectionResult:
    """Decisions and estimates for the target frames of one window"""
    target_frames: Tuple[int, ...]
    posterior_active: np.ndarray   # (|T_f|, N)
    llr: np.ndarray                # (|T_f|, N)
    decisions: np.ndarray          # (|T_f|, N) bool
    x_hat: np.ndarray              # (|T_f|, N, V)
    iterations: int
    converged: bool
    nmse_trajectory: List[float] = field(default_factory=list)
    sigma_eff_sq: Optional[np.ndarray] = None
    nmse_defined: bool = True
    beliefs: Optional[BeliefState] = None
    gamp: Optional[GampState] = None

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iterations"


def fuse_and_decide(beliefs: BeliefState, threshold: float, window: WindowSpec,
                    x_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Posterior, LLR, hard decision and estimates for the target frames.

    Returns:
        (posterior_active, llr, decisions, x_hat), target frames only
    """
    target = window.target_slice
    llr = fuse_llr(beliefs.pi_left[target], beliefs.psi_right[target], beliefs.varphi_right[target])
    posterior = expit(llr)
    return posterior, llr, llr >= threshold, x_hat[target]


class ActivityDetector:
    """Joint activity detector and channel estimator for one window at a time"""

    def __init__(self, config: Optional[InferenceConfig] = None,
                 trace_hook: Optional[TraceHook] = None):
        """
        Initialize the detector

        Args:
            config: Iteration and decision settings
            trace_hook: Optional callback receiving an IterationSnapshot per iteration
        """
        self.config = config or InferenceConfig()
        self.trace_hook = trace_hook

    def _chain_arrays(self, params: MarkovActivityParams, n_users: int):
        if self.config.mode == DetectionMode.CS:
            return params.without_correlation().arrays(n_users)
        return params.arrays(n_users)

    def run_window(self, signals: FrameSignals, layout: NetworkLayout,
                   params: MarkovActivityParams, window: WindowSpec,
                   observation=None) -> DetectionResult:
        """
        Iterate activity refinement, GAMP and EM until convergence.

        Args:
            signals: Frame signals (all frames); only the window's frames are used
            layout: Network layout providing gains and cooperation sets
            params: Markov activity parameters
            window: Window placement
            observation: Optional quantized observation replacing the Gaussian
                output channel (must provide select() and posterior())

        Returns:
            DetectionResult for the window's target frames
        """
        cfg = self.config
        eps_p = cfg.eps_p
        damping = cfg.damping
        frames = slice(window.t0, window.t0 + window.T_w)

        y = signals.y[frames]
        x_true = signals.x_true[frames]
        a = signals.pilots.a
        a_abs2 = np.abs(a) ** 2
        ap_of_v = signals.ap_of_virtual()
        mask = layout.coop_mask[:, ap_of_v]
        g_eff = signals.tx_power * layout.g_lin[:, ap_of_v]
        n_users = a.shape[1]
        alpha_n, beta_n, p_n = self._chain_arrays(params, n_users)
        channel = observation.select(frames) if observation is not None else None

        T_w = window.T_w
        V = y.shape[2]
        x_hat = np.zeros((T_w, n_users, V), dtype=complex)
        nu_x = np.broadcast_to(np.where(mask, p_n[:, None] * g_eff, 0.0), x_hat.shape).copy()
        phi_left = np.full(x_hat.shape, 0.5)
        s_hat = np.zeros(y.shape, dtype=complex)
        sigma = np.full(V, float(signals.noise_var))

        true_energy = float(np.sum(np.abs(x_true[:, mask]) ** 2)) if mask.any() else 0.0
        nmse_defined = true_energy > 0.0
        trajectory = [0.0 if nmse_defined else float('nan')]

        converged = False
        iteration = 0
        for iteration in range(1, cfg.i_max + 1):
            beliefs = refine_activity(phi_left, mask, alpha_n, beta_n, p_n, eps_p)
            sigma_used = sigma

            p_hat, nu_p = gamp_linear_step(a, x_hat, nu_x, s_hat, a_abs2)
            if channel is None:
                z_hat, nu_z, s_new, nu_s = gaussian_output_step(p_hat, nu_p, y, sigma, cfg.nu_floor)
            else:
                nu_p = np.maximum(nu_p, cfg.nu_floor)
                z_hat, nu_z = channel.posterior(p_hat, nu_p, sigma)
                s_new, nu_s = residual_step(z_hat, nu_z, p_hat, nu_p)
            s_hat = damping * s_new + (1.0 - damping) * s_hat

            r_hat, nu_r = gamp_input_step(a, x_hat, s_hat, nu_s, a_abs2)
            x_new, nu_x_new, phi_left_new = bg_denoiser(r_hat, nu_r, g_eff, beliefs.phi_right)

            x_prev = x_hat
            x_hat = np.where(mask, damping * x_new + (1.0 - damping) * x_prev, 0.0)
            nu_x = np.where(mask, nu_x_new, 0.0)
            phi_left = np.where(mask, clamp(phi_left_new, eps_p), 0.5)

            if cfg.em_enabled:
                y_em = y if channel is None else channel.codewords
                sigma = em_noise_update(y_em, z_hat, nu_z)

            change = float(np.sum(np.abs(x_hat - x_prev) ** 2))
            previous = float(np.sum(np.abs(x_prev) ** 2))
            if previous > 0.0:
                relative = change / previous
            else:
                relative = 0.0 if change == 0.0 else np.inf

            error_energy = float(np.sum(np.abs(x_hat[:, mask] - x_true[:, mask]) ** 2))
            nmse_db = to_db(error_energy / true_energy) if nmse_defined else float('nan')
            trajectory.append(nmse_db)

            if self.trace_hook is not None:
                self.trace_hook(IterationSnapshot(
                    iteration=iteration,
                    nmse_db=nmse_db,
                    relative_change=relative,
                    sigma_eff_sq=np.array(sigma_used, copy=True),
                    mean_pi_left=float(beliefs.pi_left.mean()),
                    mean_pi_right=float(beliefs.pi_right.mean()),
                    mean_phi_left=float(phi_left[:, mask].mean()) if mask.any() else 0.5,
                    phi_right=beliefs.phi_right,
                    nu_z_mean=nu_z.mean(axis=1),
                    error_energy=error_energy,
                    true_energy=true_energy,
                ))

            if relative < cfg.eps_conv:
                converged = True
                break

        if not converged:
            logger.warning(f"Window t0={window.t0} stopped at i_max={cfg.i_max} without converging")
        if not nmse_defined:
            logger.warning(f"Window t0={window.t0}: no channel energy, NMSE undefined")

        final = refine_activity(phi_left, mask, alpha_n, beta_n, p_n, eps_p)
        posterior, llr, decisions, x_target = fuse_and_decide(final, cfg.threshold, window, x_hat)
        return DetectionResult(
            target_frames=tuple(window.target_frames),
            posterior_active=posterior,
            llr=llr,
            decisions=decisions,
            x_hat=x_target,
            iterations=iteration,
            converged=converged,
            nmse_trajectory=trajectory,
            sigma_eff_sq=sigma,
            nmse_defined=nmse_defined,
            beliefs=final,
            gamp=GampState(x_hat=x_hat, nu_x=nu_x, s_hat=s_hat, nu_s=nu_s, p_hat=p_hat, nu_p=nu_p,
                           z_hat=z_hat, nu_z=nu_z, r_hat=r_hat, nu_r=nu_r, sigma_eff_sq=sigma),
        )


def run_window(signals: FrameSignals, layout: NetworkLayout, params: MarkovActivityParams,
               config: InferenceConfig, window: WindowSpec,
               trace_hook: Optional[TraceHook] = None, observation=None) -> DetectionResult:
    """Convenience wrapper around ActivityDetector.run_window"""
    detector = ActivityDetector(config, trace_hook)
    return detector.run_window(signals, layout, params, window, observation)


def complexity_per_user(L: int, n_users: int, n_aps: int, antennas: int, ap_load: float,
                        coop_size: float, window_size: int = 1, target_size: int = 1,
                        mode: DetectionMode = DetectionMode.DCS) -> float:
    """
    Complex multiplications per user and per decided frame.

    Args:
        L: Pilot length
        n_users: N
        n_aps: U
        antennas: M
        ap_load: Mean |N_u| (users detected per AP)
        coop_size: Mean |U_n| (APs per user)
        window_size: T_w (DCS only)
        target_size: |T_f| (DCS only)
        mode: DCS or CS

    Returns:
        Multiplications per user
    """
    shared = (2.0 * L * ap_load * n_aps * antennas + 17.0 / 4.0 * L * n_aps * antennas
              + 27.0 / 4.0 * ap_load * n_aps * antennas)
    if mode == DetectionMode.CS:
        total = shared + (coop_size / 2.0 + 1.0) * n_users
    else:
        total = (window_size / target_size) * (shared + (coop_size + 67.0 / 4.0) * n_users)
    return total / n_users


__all__ = [
    'BeliefState',
    'GampState',
    'IterationSnapshot',
    'DetectionResult',
    'ActivityDetector',
    'combine_ap_evidence',
    'forward_sweep',
    'backward_sweep',
    'temporal_prior',
    'per_ap_prior',
    'refine_activity',
    'fuse_llr',
    'fuse_and_decide',
    'gamp_linear_step',
    'gaussian_output_step',
    'residual_step',
    'gamp_input_step',
    'bg_denoiser',
    'em_noise_update',
    'run_window',
    'complexity_per_user',
    'logit',
    'clamp',
    'combine_pair',
    'NMSE_FLOOR_DB',
]
