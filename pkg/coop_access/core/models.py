"""
Coop Access Core Data Models

Centralized configuration dataclasses, enums and result containers shared by
the simulation modules, the pipeline and the command line.
"""

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np

from coop_access.netgen import DEFAULT_HALF_SPACING_KM, hex_cell_count
from coop_access.phy import SystemParams
from coop_access.traffic import MarkovActivityParams, solve_steady_state

# Defaults of the reference three-tier scenario
DEFAULT_TIERS = 3
DEFAULT_USERS_PER_CELL = 1000
DEFAULT_D_MAX_KM = 2.5 * DEFAULT_HALF_SPACING_KM
DEFAULT_PILOT_LENGTH = 300
DEFAULT_P_A = 0.1
DEFAULT_BETA = 0.9


class ProcessingStage(Enum):
    """Current stage of a simulation run"""
    CREATED = "created"
    GENERATING_NETWORK = "generating_network"
    SAMPLING_TRAFFIC = "sampling_traffic"
    SYNTHESIZING = "synthesizing"
    DETECTING = "detecting"
    AGGREGATING = "aggregating"
    EXPORTING = "exporting"
    COMPLETED = "completed"
    FAILED = "failed"


class DetectionMode(Enum):
    """Activity prior used by the detector"""
    DCS = "dcs"     # Markov chain across the window
    CS = "cs"       # alpha = beta = p_a, no temporal information


class FronthaulMode(Enum):
    """How AP observations reach the central unit"""
    IDEAL = "ideal"   # unquantized signals
    QF = "qf"         # quantize-and-forward
    DF = "df"         # detect-and-forward


@dataclass
class ProcessingResult:
    """Result of a processing operation"""
    success: bool
    stage: ProcessingStage
    message: str = ""
    data: Optional[Any] = None
    error: Optional[Exception] = None
    processing_time: Optional[float] = None

    @classmethod
    def success_result(cls, stage: ProcessingStage, message: str = "", data: Any = None,
                       processing_time: float = None):
        """Create a successful result"""
        return cls(success=True, stage=stage, message=message, data=data,
                   processing_time=processing_time)

    @classmethod
    def error_result(cls, stage: ProcessingStage, error: Exception, message: str = ""):
        """Create an error result"""
        return cls(success=False, stage=stage, message=message or str(error), error=error)


@dataclass
class NetworkConfig:
    """Geometry of the hexagonal network"""
    tiers: int = DEFAULT_TIERS
    users_per_cell: int = DEFAULT_USERS_PER_CELL
    half_spacing_km: float = DEFAULT_HALF_SPACING_KM
    d_max_km: float = DEFAULT_D_MAX_KM

    @property
    def n_aps(self) -> int:
        return hex_cell_count(self.tiers)

    @property
    def n_users(self) -> int:
        return self.n_aps * self.users_per_cell

    def validate(self) -> List[str]:
        errors = []
        if self.tiers < 1:
            errors.append(f"tiers must be >= 1, got {self.tiers}")
        if self.users_per_cell < 1:
            errors.append(f"users_per_cell must be >= 1, got {self.users_per_cell}")
        if self.half_spacing_km <= 0:
            errors.append(f"half_spacing_km must be positive, got {self.half_spacing_km}")
        if self.d_max_km <= 0:
            errors.append(f"d_max_km must be positive, got {self.d_max_km}")
        return errors


@dataclass
class TrafficConfig:
    """Markov activity parameterized by (p_a, beta)"""
    p_a: float = DEFAULT_P_A
    beta: float = DEFAULT_BETA

    @property
    def alpha(self) -> float:
        return solve_steady_state(self.p_a, self.beta)

    def to_params(self) -> MarkovActivityParams:
        return MarkovActivityParams.from_steady_state(self.p_a, self.beta)

    def validate(self) -> List[str]:
        try:
            solve_steady_state(self.p_a, self.beta)
        except ValueError as e:
            return [str(e)]
        return []


@dataclass
class WindowConfig:
    """Sliding-window geometry"""
    n_frames: int = 10
    window_size: int = 4
    step: int = 2
    target_offset: int = 1

    def validate(self) -> List[str]:
        errors = []
        if self.n_frames < 1:
            errors.append(f"n_frames must be >= 1, got {self.n_frames}")
        if self.window_size < 1:
            errors.append(f"window_size must be >= 1, got {self.window_size}")
        if not 1 <= self.step <= self.window_size:
            errors.append(f"step must lie in [1, window_size], got {self.step}")
        if not 0 <= self.target_offset <= self.window_size - self.step:
            errors.append(f"target_offset must lie in [0, window_size - step], got {self.target_offset}")
        return errors


@dataclass
class InferenceConfig:
    """
    Iteration control and decision settings of the detector.

    The defaults stop on a relative change of 1e-5 under damping 0.7, which
    ends near -40 dB NMSE even when the problem is noiseless. Exact recovery
    in the noiseless, orthonormal-pilot limit needs undamped iterations run to
    i_max; use noiseless_limit() for that.
    """
    eps_conv: float = 1e-5
    i_max: int = 50
    eps_p: float = 1e-12
    damping: float = 0.7
    threshold: float = 0.0
    mode: DetectionMode = DetectionMode.DCS
    em_enabled: bool = True
    nu_floor: float = 1e-18

    @classmethod
    def noiseless_limit(cls, i_max: int = 60, **kwargs) -> 'InferenceConfig':
        """Undamped settings without an early stop"""
        return cls(eps_conv=0.0, i_max=i_max, damping=1.0, **kwargs)

    def validate(self) -> List[str]:
        errors = []
        if not 0.0 < self.damping <= 1.0:
            errors.append(f"damping must lie in (0, 1], got {self.damping}")
        if self.i_max < 1:
            errors.append(f"i_max must be >= 1, got {self.i_max}")
        if self.eps_conv < 0:
            errors.append(f"eps_conv must be non-negative, got {self.eps_conv}")
        if not 0.0 < self.eps_p < 0.5:
            errors.append(f"eps_p must lie in (0, 0.5), got {self.eps_p}")
        return errors


@dataclass
class FronthaulConfig:
    """Finite-fronthaul settings"""
    mode: FronthaulMode = FronthaulMode.IDEAL
    budget_bits: Optional[int] = None     # B per AP per frame
    bits_per_sample: Optional[int] = None  # b_Q (QF, per complex sample)
    bits_per_llr: Optional[int] = None     # b_D (DF)
    clip: float = 3.0
    llr_clip: float = 20.0
    em_in_qf: bool = False

    def validate(self) -> List[str]:
        errors = []
        if self.clip <= 0:
            errors.append(f"clip must be positive, got {self.clip}")
        if self.llr_clip <= 0:
            errors.append(f"llr_clip must be positive, got {self.llr_clip}")
        if self.budget_bits is not None and self.budget_bits < 0:
            errors.append(f"budget_bits must be non-negative, got {self.budget_bits}")
        if self.mode == FronthaulMode.QF:
            if self.budget_bits is None and self.bits_per_sample is None:
                errors.append("QF needs budget_bits or bits_per_sample")
            if self.bits_per_sample is not None and (self.bits_per_sample < 2 or self.bits_per_sample % 2):
                errors.append(f"bits_per_sample must be an even number >= 2, got {self.bits_per_sample}")
        if self.mode == FronthaulMode.DF:
            if self.budget_bits is None and self.bits_per_llr is None:
                errors.append("DF needs budget_bits or bits_per_llr")
            if self.bits_per_llr is not None and self.bits_per_llr < 1:
                errors.append(f"bits_per_llr must be >= 1, got {self.bits_per_llr}")
        return errors


@dataclass
class ExperimentConfig:
    """Complete description of a Monte-Carlo experiment"""
    network: NetworkConfig = field(default_factory=NetworkConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    system: SystemParams = field(default_factory=SystemParams)
    window: WindowConfig = field(default_factory=WindowConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    fronthaul: FronthaulConfig = field(default_factory=FronthaulConfig)
    pilot_length: int = DEFAULT_PILOT_LENGTH
    trials: int = 100
    seed: int = 2024
    workers: int = 1
    se_samples: int = 100_000
    output_path: Optional[str] = None
    layout_path: Optional[str] = None

    def validate(self) -> List[str]:
        """Return every violated constraint (empty list when valid)"""
        errors = []
        for part in (self.network, self.traffic, self.system, self.window,
                     self.inference, self.fronthaul):
            errors.extend(part.validate())
        if self.pilot_length < 1:
            errors.append(f"pilot_length must be >= 1, got {self.pilot_length}")
        if self.trials < 1:
            errors.append(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            errors.append(f"workers must be >= 1, got {self.workers}")
        if self.se_samples < 1:
            errors.append(f"se_samples must be >= 1, got {self.se_samples}")
        return errors

    def activity_params(self) -> MarkovActivityParams:
        return self.traffic.to_params()

    def to_dict(self) -> Dict[str, Any]:
        """Plain dictionary for manifests (enums as values)"""
        def convert(value):
            if isinstance(value, Enum):
                return value.value
            if isinstance(value, dict):
                return {k: convert(v) for k, v in value.items()}
            return value
        return convert(asdict(self))


@dataclass
class MetricsReport:
    """Aggregate detection and estimation metrics over trials"""
    edr_per_frame: List[float]
    nmse_db_per_frame: List[float]
    mean_edr: float
    mean_nmse_db: float
    edr_half_width: float
    trials: int
    failed_trials: int = 0
    non_converged_windows: int = 0
    runtime_s: float = 0.0

    def as_row(self) -> Dict[str, Any]:
        """Deterministic CSV fields (runtime excluded)"""
        return {
            'trials': self.trials,
            'failed_trials': self.failed_trials,
            'non_converged_windows': self.non_converged_windows,
            'mean_edr': f"{self.mean_edr:.10g}",
            'edr_half_width': f"{self.edr_half_width:.10g}",
            'mean_nmse_db': f"{self.mean_nmse_db:.10g}",
        }


def full_scale_config() -> ExperimentConfig:
    """Reference scenario: 19 cells, 1000 users per cell"""
    return ExperimentConfig(trials=10_000)


def desk_config() -> ExperimentConfig:
    """
    Desk-scale scenario: 7 cells, 200 users per cell, L=40.

    Returns:
        ExperimentConfig suited to a laptop run
    """
    return ExperimentConfig(
        network=NetworkConfig(tiers=2, users_per_cell=200),
        pilot_length=40,
        trials=100,
    )


PRESETS = {
    'full': full_scale_config,
    'desk': desk_config,
}


def edr_half_width(values: List[float]) -> float:
    """95% normal-approximation half-width of a mean"""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return 0.0
    return float(1.96 * arr.std(ddof=1) / np.sqrt(arr.size))


__all__ = [
    'ProcessingStage',
    'DetectionMode',
    'FronthaulMode',
    'ProcessingResult',
    'NetworkConfig',
    'TrafficConfig',
    'WindowConfig',
    'InferenceConfig',
    'FronthaulConfig',
    'ExperimentConfig',
    'MetricsReport',
    'full_scale_config',
    'desk_config',
    'PRESETS',
    'edr_half_width',
]
