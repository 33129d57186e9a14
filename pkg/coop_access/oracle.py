"""
Oracle Module - exact references for tiny instances

Enumeration-based activity posteriors, an exact Markov-chain smoother,
least-squares channel recovery for orthonormal pilots and
numerical-integration versions of the scalar denoisers. Everything here is
slow on purpose and only meant for cross-checking the detector.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.special import expit, log_ndtr, logsumexp

logger = logging.getLogger(__name__)

MAX_ENUMERATION_LOG2 = 24
MAX_SMOOTHER_FRAMES = 12


def _log_transitions(alpha, beta) -> np.ndarray:
    """(N, 2, 2) log transition matrices, [from, to]"""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    trans = np.stack([
        np.stack([1.0 - alpha, alpha], axis=-1),
        np.stack([1.0 - beta, beta], axis=-1),
    ], axis=-2)
    with np.errstate(divide='ignore'):
        return np.log(trans)


def _log_bernoulli(p) -> np.ndarray:
    """(N, 2) log prior of the first frame"""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    with np.errstate(divide='ignore'):
        return np.log(np.stack([1.0 - p, p], axis=-1))


def exact_chain_smoother(likelihood_ratios: np.ndarray, alpha, beta, p) -> np.ndarray:
    """
    Activity marginals of independent Markov chains by brute-force enumeration.

    Args:
        likelihood_ratios: (T_w,) or (T_w, N) ratios p(obs | active) / p(obs | inactive)
        alpha, beta, p: Chain parameters, scalar or (N,)

    Returns:
        Marginal active probabilities with the shape of likelihood_ratios
    """
    ratios = np.asarray(likelihood_ratios, dtype=float)
    squeeze = ratios.ndim == 1
    if squeeze:
        ratios = ratios[:, None]
    T, N = ratios.shape
    if T > MAX_SMOOTHER_FRAMES:
        raise ValueError(f"enumeration over {T} frames exceeds the cap of {MAX_SMOOTHER_FRAMES}")

    log_trans = np.broadcast_to(_log_transitions(alpha, beta), (N, 2, 2))
    log_first = np.broadcast_to(_log_bernoulli(p), (N, 2))
    with np.errstate(divide='ignore'):
        log_ratio = np.log(ratios)

    sequences = np.array(list(itertools.product((0, 1), repeat=T)), dtype=int)   # (S, T)
    users = np.arange(N)
    log_weight = log_first[users[None, :], sequences[:, [0]]]                        # (S, N)
    for t in range(1, T):
        log_weight = log_weight + log_trans[users[None, :], sequences[:, [t - 1]], sequences[:, [t]]]
    log_weight = log_weight + np.where(sequences[:, :, None] == 1, log_ratio[None, :, :], 0.0).sum(axis=1)

    log_total = logsumexp(log_weight, axis=0)
    marginals = np.empty((T, N))
    for t in range(T):
        active = sequences[:, t] == 1
        marginals[t] = np.exp(logsumexp(log_weight[active], axis=0) - log_total)
    return marginals[:, 0] if squeeze else marginals


@dataclass
class TinyInstance:
    """A window small enough to enumerate every activity pattern"""
    pilots: np.ndarray        # (L, N)
    y: np.ndarray             # (T_w, L, V)
    g_eff: np.ndarray         # (N, V) rho0 * g_lin per virtual AP
    noise_var: np.ndarray     # (V,)
    alpha: np.ndarray         # (N,)
    beta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.pilots = np.asarray(self.pilots)
        self.y = np.asarray(self.y)
        if self.y.ndim == 2:
            self.y = self.y[None]
        n_users = self.pilots.shape[1]
        V = self.y.shape[2]
        self.g_eff = np.broadcast_to(np.asarray(self.g_eff, dtype=float), (n_users, V))
        self.noise_var = np.broadcast_to(np.asarray(self.noise_var, dtype=float), (V,))
        for name in ('alpha', 'beta', 'p'):
            setattr(self, name, np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n_users,)))

    @property
    def n_users(self) -> int:
        return int(self.pilots.shape[1])

    @property
    def n_frames(self) -> int:
        return int(self.y.shape[0])


def _patterns(n_users: int) -> np.ndarray:
    """All 2^N activity patterns, user 0 as the most significant bit"""
    k = np.arange(2 ** n_users)
    shifts = n_users - 1 - np.arange(n_users)
    return ((k[:, None] >> shifts[None, :]) & 1).astype(bool)


def frame_log_likelihoods(instance: TinyInstance) -> np.ndarray:
    """
    log p(Y_t | pattern) for every frame and pattern.

    Each virtual AP observes y ~ CN(0, A diag(g * lambda) A^H + sigma^2 I).

    Returns:
        (T_w, 2^N) log-likelihoods
    """
    a = instance.pilots
    L = a.shape[0]
    patterns = _patterns(instance.n_users).astype(float)
    result = np.zeros((instance.n_frames, patterns.shape[0]))
    for v in range(instance.y.shape[2]):
        powers = patterns * instance.g_eff[None, :, v]                      # (K, N)
        cov = np.einsum('ln,kn,mn->klm', a, powers, a.conj())
        cov = cov + instance.noise_var[v] * np.eye(L)[None]
        _, logdet = np.linalg.slogdet(cov)
        for t in range(instance.n_frames):
            y = instance.y[t, :, v]
            rhs = np.broadcast_to(y[None, :, None], (cov.shape[0], L, 1))
            solved = np.linalg.solve(cov, rhs)[..., 0]
            quad = np.real(np.einsum('l,kl->k', y.conj(), solved))
            result[t] += -L * np.log(np.pi) - logdet - quad
    return result


def _propagate(log_msg: np.ndarray, log_trans: np.ndarray, backward: bool = False) -> np.ndarray:
    """Apply per-user transitions to a message over joint patterns, one axis at a time"""
    n_users = log_trans.shape[0]
    msg = log_msg.reshape((2,) * n_users)
    for n in range(n_users):
        trans = log_trans[n].T if backward else log_trans[n]
        moved = np.moveaxis(msg, n, -1)[..., :, None] + trans
        msg = np.moveaxis(logsumexp(moved, axis=-2), -1, n)
    return msg.reshape(-1)


def exact_activity_posterior(instance: TinyInstance) -> np.ndarray:
    """
    Exact Pr(lambda[t, n] = 1 | all observations of the window).

    Forward-backward over joint activity patterns; identical to summing all
    2^(N T_w) sequences.

    Returns:
        (T_w, N) marginal probabilities
    """
    N, T = instance.n_users, instance.n_frames
    if N * T > MAX_ENUMERATION_LOG2:
        raise ValueError(f"2^{N * T} activity sequences exceed the cap of 2^{MAX_ENUMERATION_LOG2}")

    patterns = _patterns(N)
    loglik = frame_log_likelihoods(instance)
    log_trans = _log_transitions(instance.alpha, instance.beta)
    log_first = _log_bernoulli(instance.p)
    log_prior = np.where(patterns, log_first[None, :, 1], log_first[None, :, 0]).sum(axis=1)

    forward = np.empty_like(loglik)
    forward[0] = log_prior + loglik[0]
    for t in range(1, T):
        forward[t] = _propagate(forward[t - 1], log_trans) + loglik[t]

    backward = np.zeros_like(loglik)
    for t in range(T - 2, -1, -1):
        backward[t] = _propagate(backward[t + 1] + loglik[t + 1], log_trans, backward=True)

    marginals = np.empty((T, N))
    for t in range(T):
        joint = forward[t] + backward[t]
        total = logsumexp(joint)
        for n in range(N):
            marginals[t, n] = np.exp(logsumexp(joint[patterns[:, n]]) - total)
    return marginals


def exact_activity_posterior_bruteforce(instance: TinyInstance) -> np.ndarray:
    """Same marginals by direct summation over every activity sequence"""
    N, T = instance.n_users, instance.n_frames
    if N * T > 16:
        raise ValueError("brute-force enumeration is limited to N * T_w <= 16")
    patterns = _patterns(N)
    loglik = frame_log_likelihoods(instance)
    log_trans = _log_transitions(instance.alpha, instance.beta)
    log_first = _log_bernoulli(instance.p)
    users = np.arange(N)

    sequences = np.array(list(itertools.product(range(patterns.shape[0]), repeat=T)), dtype=int)
    log_weight = np.zeros(sequences.shape[0])
    for t in range(T):
        state = patterns[sequences[:, t]].astype(int)
        if t == 0:
            log_weight += log_first[users[None, :], state].sum(axis=1)
        else:
            prev = patterns[sequences[:, t - 1]].astype(int)
            log_weight += log_trans[users[None, :], prev, state].sum(axis=1)
        log_weight += loglik[t, sequences[:, t]]

    total = logsumexp(log_weight)
    marginals = np.empty((T, N))
    for t in range(T):
        for n in range(N):
            active = patterns[sequences[:, t], n]
            marginals[t, n] = np.exp(logsumexp(log_weight[active]) - total)
    return marginals


def exact_binary_posterior(y: np.ndarray, a: np.ndarray, g_eff, noise_var, p: float) -> float:
    """
    Two-hypothesis posterior for one user in one frame.

    Args:
        y: (L,) or (L, V) observations
        a: (L,) pilot
        g_eff: scalar or (V,) active channel variance
        noise_var: scalar or (V,)
        p: prior activity probability

    Returns:
        Pr(active | y)
    """
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    a = np.asarray(a).reshape(-1)
    V = y.shape[1]
    g = np.broadcast_to(np.asarray(g_eff, dtype=float), (V,))
    sigma = np.broadcast_to(np.asarray(noise_var, dtype=float), (V,))
    energy = float(np.real(np.vdot(a, a)))
    matched = np.abs(a.conj() @ y) ** 2
    log_ratio = -np.log1p(g * energy / sigma) + g * matched / (sigma * (sigma + g * energy))
    return float(expit(np.log(p) - np.log1p(-p) + log_ratio.sum()))


def ls_channel_recovery(a: np.ndarray, y: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """x_hat = A^H y for pilots with orthonormal columns"""
    gram = a.conj().T @ a
    if not np.allclose(gram, np.eye(a.shape[1]), atol=atol):
        raise ValueError("pilot columns are not orthonormal")
    return a.conj().T @ y


# ---------------------------------------------------------------------------
# Quadrature oracles
# ---------------------------------------------------------------------------

def _log_normal(x, mean, var):
    return -0.5 * (x - mean) ** 2 / var - 0.5 * np.log(2.0 * np.pi * var)


def _two_stage_moments(log_f: Callable[[np.ndarray], np.ndarray], center: float, scale: float,
                       coarse: int = 4001, fine: int = 20001, span: float = 40.0,
                       cutoff: float = 60.0) -> Tuple[float, float, float]:
    """
    log-mass, mean and variance of an unnormalized density.

    A coarse grid locates the region where log_f is within `cutoff` of its
    maximum; Simpson's rule on a fine grid over that region does the rest.
    """
    x = np.linspace(center - span * scale, center + span * scale, coarse)
    values = log_f(x)
    keep = values >= values.max() - cutoff
    pad = x[1] - x[0]
    x = np.linspace(x[keep].min() - pad, x[keep].max() + pad, fine)
    values = log_f(x)
    peak = values.max()
    weights = np.exp(values - peak)
    mass = simpson(weights, x=x)
    mean = simpson(x * weights, x=x) / mass
    var = simpson((x - mean) ** 2 * weights, x=x) / mass
    return float(peak + np.log(mass)), float(mean), float(var)


def bg_posterior_by_quadrature(r: complex, nu_r: float, g: float, phi: float) -> Tuple[complex, float, float]:
    """
    Bernoulli-Gaussian posterior by numerical integration.

    Returns:
        (posterior mean, posterior variance, posterior activity probability)
    """
    half_nu = nu_r / 2.0
    half_g = g / 2.0
    scale = np.sqrt(max(half_nu, half_g)) + abs(r)
    parts = []
    for component in (float(np.real(r)), float(np.imag(r))):
        log_f = lambda x, c=component: _log_normal(c, x, half_nu) + _log_normal(x, 0.0, half_g)
        parts.append(_two_stage_moments(log_f, 0.5 * component, scale))
    (log_z_re, mean_re, var_re), (log_z_im, mean_im, var_im) = parts

    log_active = log_z_re + log_z_im
    log_inactive = (_log_normal(float(np.real(r)), 0.0, half_nu)
                    + _log_normal(float(np.imag(r)), 0.0, half_nu))
    activity = float(expit(np.log(phi) - np.log1p(-phi) + log_active - log_inactive))

    mean_active = mean_re + 1j * mean_im
    second_moment = activity * (var_re + var_im + abs(mean_active) ** 2)
    mean = activity * mean_active
    return complex(mean), float(second_moment - abs(mean) ** 2), activity


def qf_posterior_by_quadrature(p: float, prior_var: float, noise_var: float,
                               lower: float, upper: float) -> Tuple[float, float]:
    """
    Mean and variance of a real z ~ N(p, prior_var) given that z + w,
    w ~ N(0, noise_var), fell in (lower, upper], by numerical integration.
    """
    noise_std = np.sqrt(noise_var)

    def log_bin(z):
        a = (lower - z) / noise_std
        b = (upper - z) / noise_std
        upper_tail = a > 0
        hi = np.where(upper_tail, -a, b)
        lo = np.where(upper_tail, -b, a)
        log_hi = log_ndtr(hi)
        with np.errstate(divide='ignore', invalid='ignore'):
            return log_hi + np.log(-np.expm1(log_ndtr(lo) - log_hi))

    def log_f(z):
        return _log_normal(z, p, prior_var) + log_bin(z)

    edges = [e for e in (lower, upper) if np.isfinite(e)]
    center = float(np.mean(edges + [p]))
    scale = np.sqrt(prior_var + noise_var) + max(abs(e - p) for e in edges + [p])
    _, mean, var = _two_stage_moments(log_f, center, scale)
    return mean, var


__all__ = [
    'TinyInstance',
    'exact_chain_smoother',
    'exact_activity_posterior',
    'exact_activity_posterior_bruteforce',
    'exact_binary_posterior',
    'frame_log_likelihoods',
    'ls_channel_recovery',
    'bg_posterior_by_quadrature',
    'qf_posterior_by_quadrature',
]
