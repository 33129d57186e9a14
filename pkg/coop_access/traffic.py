"""
Traffic Module - Markov user activity

Two-state first-order Markov activity per user: alpha = Pr(active | inactive
before), beta = Pr(active | active before), stationary probability
p_a = alpha / (1 + alpha - beta).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

STEADY_STATE_TOLERANCE = 1e-12


def solve_steady_state(p_a: float, beta: float) -> float:
    """
    Transition probability alpha giving stationary activity p_a.

    Args:
        p_a: Stationary active probability, 0 < p_a < 1
        beta: Pr(active | previously active)

    Returns:
        alpha = p_a (1 - beta) / (1 - p_a)
    """
    if not 0.0 < p_a < 1.0:
        raise ValueError(f"p_a must lie in (0, 1), got {p_a}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    alpha = p_a * ((1.0 - beta) / (1.0 - p_a))
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"p_a={p_a}, beta={beta} gives alpha={alpha:.6f} outside [0, 1]")
    return alpha


def _check_probabilities(name: str, values) -> None:
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(~np.isfinite(arr)):
        raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class MarkovActivityParams:
    """Markov activity parameters, optionally overridden per user"""
    alpha: float
    beta: float
    p_a: float
    per_user_override: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        _check_probabilities("alpha", self.alpha)
        _check_probabilities("beta", self.beta)
        _check_probabilities("p_a", self.p_a)
        self._check_relation(self.alpha, self.beta, self.p_a)
        if self.per_user_override is not None:
            alpha_n, beta_n, p_n = (np.asarray(v, dtype=float) for v in self.per_user_override)
            if not (alpha_n.shape == beta_n.shape == p_n.shape) or alpha_n.ndim != 1:
                raise ValueError("per-user overrides must be 1-D arrays of equal length")
            for name, arr in (("alpha_n", alpha_n), ("beta_n", beta_n), ("p_n", p_n)):
                _check_probabilities(name, arr)
            self._check_relation(alpha_n, beta_n, p_n)
            object.__setattr__(self, 'per_user_override', (alpha_n, beta_n, p_n))

    @staticmethod
    def _check_relation(alpha, beta, p_a) -> None:
        alpha, beta, p_a = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (alpha, beta, p_a)))
        denom = 1.0 + alpha - beta
        defined = denom > 0.0
        # beta=1, alpha=0 freezes the chain; any p_a is stationary there
        expected = np.divide(alpha, denom, out=np.zeros_like(alpha), where=defined)
        if np.any(np.abs(expected - p_a)[defined] > STEADY_STATE_TOLERANCE):
            raise ValueError("p_a must equal alpha / (1 + alpha - beta)")

    @classmethod
    def from_steady_state(cls, p_a: float, beta: float) -> 'MarkovActivityParams':
        """Parameterize the chain by (p_a, beta) with alpha derived"""
        return cls(alpha=solve_steady_state(p_a, beta), beta=beta, p_a=p_a)

    @classmethod
    def memoryless(cls, p_a: float) -> 'MarkovActivityParams':
        """Chain without temporal correlation (alpha = beta = p_a)"""
        return cls(alpha=p_a, beta=p_a, p_a=p_a)

    @classmethod
    def per_user(cls, p_n, beta_n) -> 'MarkovActivityParams':
        """Non-identical users; the scalar fields hold the population means"""
        p_n = np.asarray(p_n, dtype=float)
        beta_n = np.broadcast_to(np.asarray(beta_n, dtype=float), p_n.shape).copy()
        alpha_n = np.array([solve_steady_state(p, b) for p, b in zip(p_n, beta_n)])
        p_mean = float(p_n.mean())
        beta_mean = float(beta_n.mean())
        return cls(alpha=solve_steady_state(p_mean, beta_mean), beta=beta_mean, p_a=p_mean,
                   per_user_override=(alpha_n, beta_n, p_n))

    @property
    def correlated(self) -> bool:
        return self.alpha != self.beta

    def arrays(self, n_users: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-user (alpha_n, beta_n, p_n) arrays of length n_users"""
        if self.per_user_override is not None:
            alpha_n, beta_n, p_n = self.per_user_override
            if alpha_n.shape[0] != n_users:
                raise ValueError(f"per-user overrides cover {alpha_n.shape[0]} users, expected {n_users}")
            return alpha_n, beta_n, p_n
        return (np.full(n_users, self.alpha), np.full(n_users, self.beta), np.full(n_users, self.p_a))

    def without_correlation(self) -> 'MarkovActivityParams':
        """Same stationary activity with alpha = beta = p (per user if overridden)"""
        if self.per_user_override is not None:
            p_n = self.per_user_override[2]
            return MarkovActivityParams(alpha=self.p_a, beta=self.p_a, p_a=self.p_a,
                                        per_user_override=(p_n, p_n, p_n))
        return MarkovActivityParams.memoryless(self.p_a)


@dataclass(frozen=True, eq=False)
class ActivityTrace:
    """Boolean activity matrix, users x frames"""
    lam: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=bool)
        if lam.ndim != 2:
            raise ValueError(f"activity matrix must be 2-D, got shape {lam.shape}")
        object.__setattr__(self, 'lam', lam)

    @property
    def frame_count(self) -> int:
        return int(self.lam.shape[1])

    @property
    def n_users(self) -> int:
        return int(self.lam.shape[0])

    def active_fraction(self) -> np.ndarray:
        """Per-frame fraction of active users"""
        return self.lam.mean(axis=0)


def sample_trace(params: MarkovActivityParams, n_users: int, n_frames: int, seed: int,
                 initial: Optional[np.ndarray] = None) -> ActivityTrace:
    """
    Sample Markov activity sequences.

    Each user draws from its own stream seeded by (seed, user index), so the
    trace of user n does not depend on how many other users are sampled.

    Args:
        params: Chain parameters
        n_users: Number of users
        n_frames: Number of frames (>= 1)
        seed: Master seed
        initial: Optional initial activity per user; drawn from p_n if omitted

    Returns:
        ActivityTrace of shape (n_users, n_frames)
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if n_users < 0:
        raise ValueError(f"n_users must be >= 0, got {n_users}")

    alpha_n, beta_n, p_n = params.arrays(n_users)
    uniforms = np.empty((n_users, n_frames))
    for n in range(n_users):
        uniforms[n] = np.random.default_rng([seed, n]).random(n_frames)

    lam = np.empty((n_users, n_frames), dtype=bool)
    if initial is None:
        lam[:, 0] = uniforms[:, 0] < p_n
    else:
        lam[:, 0] = np.broadcast_to(np.asarray(initial, dtype=bool), (n_users,))
    for t in range(1, n_frames):
        switch_on = np.where(lam[:, t - 1], beta_n, alpha_n)
        lam[:, t] = uniforms[:, t] < switch_on
    return ActivityTrace(lam=lam)


def lag_one_statistics(trace: ActivityTrace) -> Dict[str, float]:
    """Empirical stationary fraction and transition frequencies"""
    prev = trace.lam[:, :-1]
    nxt = trace.lam[:, 1:]
    active_prev = prev.sum()
    inactive_prev = (~prev).sum()
    return {
        'active_fraction': float(trace.lam.mean()),
        'alpha_hat': float((nxt & ~prev).sum() / inactive_prev) if inactive_prev else float('nan'),
        'beta_hat': float((nxt & prev).sum() / active_prev) if active_prev else float('nan'),
    }


__all__ = [
    'MarkovActivityParams',
    'ActivityTrace',
    'solve_steady_state',
    'sample_trace',
    'lag_one_statistics',
]
