"""
Fronthaul Module - quantize-and-forward and detect-and-forward

QF: every AP quantizes the real and imaginary parts of its received samples
with a uniform quantizer; the central unit runs the detector with the
quantized-output channel. DF: every AP runs the detector on its own
antennas, quantizes the per-user LLRs of the target frames and the central
unit sums them per user.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_ndtr, expit

from coop_access.core.models import FronthaulMode, InferenceConfig
from coop_access.inference import ActivityDetector, DetectionResult, logit
from coop_access.netgen import NetworkLayout, restrict_to_ap
from coop_access.phy import FrameSignals, SystemParams, quantizer_input_std
from coop_access.traffic import MarkovActivityParams
from coop_access.window import WindowSpec

logger = logging.getLogger(__name__)

DEFAULT_CLIP = 3.0
LLR_CLIP = 20.0
LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class UniformQuantizer:
    """
    Uniform scalar quantizer over [-clip * input_std, clip * input_std].

    Bins are half-open (lower, upper]; the two outer bins extend to -inf and
    +inf and map to the outermost levels.
    """
    bits: int
    input_std: float
    clip: float = DEFAULT_CLIP
    interior: np.ndarray = field(init=False, repr=False)
    levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.bits < 1:
            raise ValueError(f"bits must be >= 1, got {self.bits}")
        if self.input_std <= 0:
            raise ValueError(f"input_std must be positive, got {self.input_std}")
        if self.clip <= 0:
            raise ValueError(f"clip must be positive, got {self.clip}")
        count = 2 ** self.bits
        edge = self.clip * self.input_std
        step = 2.0 * edge / count
        object.__setattr__(self, 'interior', -edge + step * np.arange(1, count))
        object.__setattr__(self, 'levels', -edge + step * (np.arange(count) + 0.5))

    @property
    def n_levels(self) -> int:
        return int(self.levels.size)

    @property
    def step(self) -> float:
        return 2.0 * self.clip * self.input_std / self.n_levels

    @property
    def thresholds(self) -> np.ndarray:
        """All thresholds including the infinite outer ones"""
        return np.concatenate([[-np.inf], self.interior, [np.inf]])

    def index(self, x) -> np.ndarray:
        """Bin index of every input"""
        return np.searchsorted(self.interior, np.asarray(x, dtype=float), side='left')

    def quantize(self, x) -> np.ndarray:
        return self.levels[self.index(x)]

    def bounds(self, index) -> Tuple[np.ndarray, np.ndarray]:
        """(lower, upper) edges of the given bins"""
        edges = self.thresholds
        index = np.asarray(index)
        return edges[index], edges[index + 1]

    def quantize_complex(self, y) -> np.ndarray:
        """Quantize real and imaginary parts independently"""
        y = np.asarray(y)
        return self.quantize(y.real) + 1j * self.quantize(y.imag)

    def codebook(self) -> List[dict]:
        """Rows (index, lower, upper, level) for audit"""
        lower, upper = self.bounds(np.arange(self.n_levels))
        return [{'index': k, 'lower': float(lo), 'upper': float(hi), 'level': float(lv)}
                for k, (lo, hi, lv) in enumerate(zip(lower, upper, self.levels))]


def build_quantizer(bits: int, input_std: float, clip: float = DEFAULT_CLIP) -> UniformQuantizer:
    """Uniform quantizer with 2**bits levels"""
    return UniformQuantizer(bits=bits, input_std=input_std, clip=clip)


def quantize_complex(y, quantizer: UniformQuantizer) -> np.ndarray:
    return quantizer.quantize_complex(y)


def quantization_snr_db(x, quantizer: UniformQuantizer) -> float:
    """Signal-to-distortion ratio of quantizing the samples x"""
    x = np.asarray(x)
    q = quantizer.quantize_complex(x) if np.iscomplexobj(x) else quantizer.quantize(x)
    distortion = np.mean(np.abs(x - q) ** 2)
    return float(10.0 * np.log10(np.mean(np.abs(x) ** 2) / distortion))


# ---------------------------------------------------------------------------
# Quantized output channel
# ---------------------------------------------------------------------------

def _log_phi(x):
    return -0.5 * x * x - LOG_SQRT_2PI


def _log_bin_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, reflected into the lower tail"""
    upper_tail = a > 0
    hi = np.where(upper_tail, -a, b)
    lo = np.where(upper_tail, -b, a)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide='ignore', invalid='ignore'):
        return log_hi + np.log(-np.expm1(log_lo - log_hi))


def truncated_gaussian_moments(prior_mean, prior_var, noise_var, lower, upper):
    """
    Posterior moments of a real z ~ N(prior_mean, prior_var) given that
    z + w, w ~ N(0, noise_var), fell in (lower, upper].

    Returns:
        (mean, var, ok) where ok marks entries with a representable bin mass
    """
    s = np.sqrt(prior_var + noise_var)
    a = (lower - prior_mean) / s
    b = (upper - prior_mean) / s
    log_mass = _log_bin_mass(a, b)
    ok = np.isfinite(log_mass)
    with np.errstate(invalid='ignore', over='ignore', divide='ignore'):
        ra = np.exp(_log_phi(a) - log_mass)
        rb = np.exp(_log_phi(b) - log_mass)
        ratio = ra - rb
        a_term = np.where(np.isfinite(a), a * ra, 0.0)
        b_term = np.where(np.isfinite(b), b * rb, 0.0)
        mean = prior_mean + (prior_var / s) * ratio
        var = prior_var - (prior_var ** 2 / s ** 2) * (b_term - a_term + ratio ** 2)
    return mean, var, ok


def qf_output_step(p_hat, nu_p, observation: 'QuantizedObservation', sigma_sq):
    """
    Posterior mean and variance of z under the quantized output channel.

    Args:
        p_hat: (..., L, V) plug-in estimate
        nu_p: (..., L, V) its variance
        observation: Quantized samples with their bin edges (same shape)
        sigma_sq: (V,) or scalar noise variance

    Returns:
        (z_hat, nu_z)
    """
    half_prior = nu_p / 2.0
    half_noise = np.broadcast_to(np.asarray(sigma_sq, dtype=float) / 2.0, np.shape(p_hat))
    mean_re, var_re, ok_re = truncated_gaussian_moments(
        p_hat.real, half_prior, half_noise, observation.lower_re, observation.upper_re)
    mean_im, var_im, ok_im = truncated_gaussian_moments(
        p_hat.imag, half_prior, half_noise, observation.lower_im, observation.upper_im)

    fallback_var = np.broadcast_to(observation.step ** 2 / 12.0, np.shape(p_hat))
    codes = observation.codewords
    mean_re = np.where(ok_re, mean_re, codes.real)
    mean_im = np.where(ok_im, mean_im, codes.imag)
    var_re = np.where(ok_re, var_re, fallback_var)
    var_im = np.where(ok_im, var_im, fallback_var)

    degenerate = int(np.sum(~ok_re) + np.sum(~ok_im))
    if degenerate:
        logger.debug(f"{degenerate} quantized components fell back to the codeword")

    nu_z = var_re + var_im
    out_of_range = (nu_z < 0.0) | (nu_z > nu_p)
    if np.any(out_of_range):
        logger.debug(f"{int(out_of_range.sum())} quantized variances clipped into [0, nu_p]")
        nu_z = np.clip(nu_z, 0.0, nu_p)
    return mean_re + 1j * mean_im, nu_z


def _closed_form_component(p, nu_p, y, sigma_sq, lower, upper):
    """Sign/min/max form of the component mean and variance for one real part"""
    sign = np.sign(y)
    near = np.minimum(np.abs(lower), np.abs(upper))
    far = np.maximum(np.abs(lower), np.abs(upper))
    scale = np.sqrt((sigma_sq + nu_p) / 2.0)
    k1 = (sign * p - near) / scale
    k2 = (sign * p - far) / scale
    with np.errstate(invalid='ignore', over='ignore', divide='ignore'):
        eta1 = np.exp(_log_phi(k1))
        eta2 = np.exp(_log_phi(k2))
        mass = np.exp(_log_bin_mass(k2, k1))
        ratio = (eta1 - eta2) / mass
        k1_term = np.where(np.isfinite(k1), k1 * eta1, 0.0)
        k2_term = np.where(np.isfinite(k2), k2 * eta2, 0.0)
        mean = p + sign * nu_p / np.sqrt(2.0 * (sigma_sq + nu_p)) * ratio
        var = nu_p / 2.0 - nu_p ** 2 / (2.0 * (sigma_sq + nu_p)) * ((k1_term - k2_term) / mass + ratio ** 2)
    return mean, var


def qf_output_step_closed_form(p_hat, nu_p, observation: 'QuantizedObservation', sigma_sq):
    """
    Cross-check path using the sign/min/max formulation.

    The complex-domain variances nu_p and sigma_sq enter directly; valid for
    symmetric quantizers where no bin straddles zero.
    """
    sigma_sq = np.broadcast_to(np.asarray(sigma_sq, dtype=float), np.shape(p_hat))
    codes = observation.codewords
    mean_re, var_re = _closed_form_component(p_hat.real, nu_p, codes.real, sigma_sq,
                                             observation.lower_re, observation.upper_re)
    mean_im, var_im = _closed_form_component(p_hat.imag, nu_p, codes.imag, sigma_sq,
                                             observation.lower_im, observation.upper_im)
    return mean_re + 1j * mean_im, var_re + var_im


@dataclass(frozen=True, eq=False)
class QuantizedObservation:
    """Quantized received samples with the edges of their bins"""
    codewords: np.ndarray     # (T, L, V) complex
    lower_re: np.ndarray
    upper_re: np.ndarray
    lower_im: np.ndarray
    upper_im: np.ndarray
    step: np.ndarray          # (V,) bin width per virtual AP

    def select(self, frames: slice) -> 'QuantizedObservation':
        """Observation restricted to a frame range"""
        return QuantizedObservation(
            codewords=self.codewords[frames],
            lower_re=self.lower_re[frames],
            upper_re=self.upper_re[frames],
            lower_im=self.lower_im[frames],
            upper_im=self.upper_im[frames],
            step=self.step,
        )

    def posterior(self, p_hat, nu_p, sigma_sq):
        return qf_output_step(p_hat, nu_p, self, sigma_sq)


def build_observation_quantizers(layout: NetworkLayout, sys: SystemParams,
                                 params: MarkovActivityParams, pilot_length: int,
                                 bits: int, clip: float = DEFAULT_CLIP) -> List[UniformQuantizer]:
    """One quantizer per physical AP, ranged from its analytic input power"""
    p_n = params.arrays(layout.n_users)[2]
    quantizers = []
    for u in range(layout.n_aps):
        std = quantizer_input_std(layout, sys, u, p_n, pilot_length)
        quantizers.append(build_quantizer(bits, std, clip))
    return quantizers


def quantize_observations(y: np.ndarray, quantizers: Sequence[UniformQuantizer],
                          antennas_per_ap: int = 1) -> QuantizedObservation:
    """
    Quantize received samples of every AP with that AP's quantizer.

    Args:
        y: (T, L, V) received samples
        quantizers: One quantizer per physical AP
        antennas_per_ap: M, so that virtual AP v belongs to AP v // M

    Returns:
        QuantizedObservation with the same shape as y
    """
    if y.shape[2] != len(quantizers) * antennas_per_ap:
        raise ValueError(f"{y.shape[2]} virtual APs but {len(quantizers)} quantizers with M={antennas_per_ap}")
    codes = np.empty(y.shape, dtype=complex)
    lower_re = np.empty(y.shape)
    upper_re = np.empty(y.shape)
    lower_im = np.empty(y.shape)
    upper_im = np.empty(y.shape)
    step = np.empty(y.shape[2])
    for u, quantizer in enumerate(quantizers):
        cols = slice(u * antennas_per_ap, (u + 1) * antennas_per_ap)
        block = y[:, :, cols]
        idx_re = quantizer.index(block.real)
        idx_im = quantizer.index(block.imag)
        codes[:, :, cols] = quantizer.levels[idx_re] + 1j * quantizer.levels[idx_im]
        lower_re[:, :, cols], upper_re[:, :, cols] = quantizer.bounds(idx_re)
        lower_im[:, :, cols], upper_im[:, :, cols] = quantizer.bounds(idx_im)
        step[cols] = quantizer.step
    return QuantizedObservation(codewords=codes, lower_re=lower_re, upper_re=upper_re,
                                lower_im=lower_im, upper_im=upper_im, step=step)


def qf_detect_window(signals: FrameSignals, layout: NetworkLayout, params: MarkovActivityParams,
                     config: InferenceConfig, window: WindowSpec,
                     observation: QuantizedObservation, em_enabled: bool = False,
                     trace_hook=None) -> DetectionResult:
    """Centralized detection on quantized samples; EM is off unless requested"""
    detector = ActivityDetector(replace(config, em_enabled=em_enabled), trace_hook)
    return detector.run_window(signals, layout, params, window, observation)


# ---------------------------------------------------------------------------
# Detect-and-forward
# ---------------------------------------------------------------------------

@dataclass
class LocalDetection:
    """LLRs and channel estimates produced by one AP for its users"""
    ap: int
    users: Tuple[int, ...]
    llr: np.ndarray           # (|T_f|, |N_u|)
    x_hat: np.ndarray         # (|T_f|, N, M), zero outside N_u
    iterations: int
    converged: bool


def df_local_detect(signals: FrameSignals, layout: NetworkLayout, params: MarkovActivityParams,
                    config: InferenceConfig, window: WindowSpec, ap: int) -> LocalDetection:
    """
    Run the full detector on one AP's own antennas.

    Returns:
        LocalDetection with LLRs for the users of N_u only
    """
    local_layout = restrict_to_ap(layout, ap)
    local_signals = signals.restrict_to_ap(ap)
    result = ActivityDetector(config).run_window(local_signals, local_layout, params, window)
    users = layout.coop_ap_to_users[ap]
    return LocalDetection(
        ap=ap,
        users=users,
        llr=result.llr[:, list(users)],
        x_hat=result.x_hat,
        iterations=result.iterations,
        converged=result.converged,
    )


def llr_quantizer(bits: int, llr_clip: float = LLR_CLIP) -> UniformQuantizer:
    """Shared LLR quantizer over [-llr_clip, llr_clip]"""
    return build_quantizer(bits, input_std=llr_clip, clip=1.0)


def df_aggregate(local: Sequence[LocalDetection], n_users: int, p_n: np.ndarray,
                 threshold: float = 0.0,
                 quantizer: Optional[UniformQuantizer] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sum (quantized) local LLRs per user and decide by threshold.

    Users reported by no AP keep their prior log-odds.

    Returns:
        (llr_sum, decisions), both (|T_f|, N)
    """
    if not local:
        raise ValueError("no local detections to aggregate")
    n_targets = local[0].llr.shape[0]
    total = np.zeros((n_targets, n_users))
    reported = np.zeros(n_users, dtype=bool)
    for item in local:
        if not item.users:
            continue
        values = item.llr if quantizer is None else quantizer.quantize(item.llr)
        cols = list(item.users)
        total[:, cols] += values
        reported[cols] = True
    total[:, ~reported] = logit(np.asarray(p_n, dtype=float)[~reported])
    return total, total >= threshold


def df_detect_window(signals: FrameSignals, layout: NetworkLayout, params: MarkovActivityParams,
                     config: InferenceConfig, window: WindowSpec,
                     quantizer: Optional[UniformQuantizer] = None, workers: int = 1) -> DetectionResult:
    """
    Detect-and-forward over all APs of the layout.

    Local detections run concurrently; aggregation is a pure reduction in
    AP order. Channel estimates stay with the AP that produced them.
    """
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        local = list(pool.map(
            lambda u: df_local_detect(signals, layout, params, config, window, u),
            range(layout.n_aps)))

    p_n = params.arrays(layout.n_users)[2]
    llr, decisions = df_aggregate(local, layout.n_users, p_n, config.threshold, quantizer)

    M = signals.antennas_per_ap
    x_hat = np.zeros((llr.shape[0], layout.n_users, signals.n_virtual_aps), dtype=complex)
    for item in local:
        x_hat[:, :, item.ap * M:(item.ap + 1) * M] = item.x_hat

    return DetectionResult(
        target_frames=tuple(window.target_frames),
        posterior_active=expit(llr),
        llr=llr,
        decisions=decisions,
        x_hat=x_hat,
        iterations=max(item.iterations for item in local),
        converged=all(item.converged for item in local),
    )


# ---------------------------------------------------------------------------
# Budgets
# ---------------------------------------------------------------------------

@dataclass
class FronthaulBudget:
    """Per-sample resolution derived from a per-AP per-frame bit budget"""
    budget_bits: int
    mode: FronthaulMode
    bits_per_sample: int
    feasible: bool
    reason: str = ""

    @property
    def bits_per_component(self) -> int:
        """b^r for QF (half of b_Q); equals bits_per_sample for DF"""
        if self.mode == FronthaulMode.QF:
            return self.bits_per_sample // 2
        return self.bits_per_sample


def budget_resolve(budget_bits: int, mode: FronthaulMode, pilot_length: int, antennas: int,
                   ap_load: Union[int, Sequence[int]]) -> FronthaulBudget:
    """
    Resolve B bits per AP per frame into per-sample bits.

    QF: b_Q = floor(B / (L M)), feasible when b_Q / 2 >= 1.
    DF: b_D = floor(B / |N_u|) using the most loaded AP, feasible when >= 1.
    Infeasibility is reported in the result.
    """
    if budget_bits < 0:
        raise ValueError(f"budget must be non-negative, got {budget_bits}")
    if mode == FronthaulMode.QF:
        bits = budget_bits // (pilot_length * antennas)
        feasible = bits // 2 >= 1
        reason = "" if feasible else f"B={budget_bits} gives b_Q={bits} < 2 bits per complex sample"
    elif mode == FronthaulMode.DF:
        loads = np.atleast_1d(np.asarray(ap_load, dtype=int))
        loads = loads[loads > 0]
        if loads.size == 0:
            return FronthaulBudget(budget_bits, mode, 0, False, "no AP has users to report")
        bits = budget_bits // int(loads.max())
        feasible = bits >= 1
        reason = "" if feasible else f"B={budget_bits} gives b_D={bits} < 1 bit per LLR"
    else:
        raise ValueError(f"no budget for fronthaul mode {mode.value}")
    if not feasible:
        logger.warning(reason)
    return FronthaulBudget(budget_bits=budget_bits, mode=mode, bits_per_sample=int(bits),
                           feasible=feasible, reason=reason)


def fronthaul_bits_required(mode: FronthaulMode, pilot_length: int, antennas: int,
                            ap_load: int, bits: int) -> int:
    """Budget B needed for the given per-sample resolution"""
    if mode == FronthaulMode.QF:
        return pilot_length * antennas * bits
    if mode == FronthaulMode.DF:
        return ap_load * bits
    raise ValueError(f"no budget for fronthaul mode {mode.value}")


__all__ = [
    'UniformQuantizer',
    'QuantizedObservation',
    'LocalDetection',
    'FronthaulBudget',
    'build_quantizer',
    'quantize_complex',
    'quantization_snr_db',
    'truncated_gaussian_moments',
    'qf_output_step',
    'qf_output_step_closed_form',
    'build_observation_quantizers',
    'quantize_observations',
    'qf_detect_window',
    'df_local_detect',
    'df_aggregate',
    'df_detect_window',
    'llr_quantizer',
    'budget_resolve',
    'fronthaul_bits_required',
]
