"""
Coop Access Core Pipeline

Orchestrates Monte-Carlo experiments: per-trial network, traffic and signal
generation, sliding-window detection under the selected fronthaul mode and
metric aggregation. Also drives parameter sweeps and the state-evolution,
oracle and QF/DF comparison runs.
"""

import logging
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from coop_access.core.models import (
    DetectionMode, ExperimentConfig, FronthaulMode, InferenceConfig, MetricsReport, ProcessingResult,
    ProcessingStage, edr_half_width,
)
from coop_access.data_export import ResultExporter, read_layout, read_rows_csv
from coop_access.fronthaul import (
    UniformQuantizer, budget_resolve, build_observation_quantizers, df_detect_window, llr_quantizer,
    qf_detect_window, quantize_observations,
)
from coop_access.inference import (
    ActivityDetector, IterationSnapshot, backward_sweep, clamp, forward_sweep, fuse_llr, to_db,
)
from coop_access.netgen import NetworkLayout, build_custom_layout, build_hex_network
from coop_access.oracle import TinyInstance, exact_activity_posterior, exact_chain_smoother
from coop_access.phy import FrameSignals, PilotMatrix, SystemParams, gen_pilots, synthesize_frames
from coop_access.se import SeRecord, se_run
from coop_access.traffic import ActivityTrace, MarkovActivityParams, sample_trace
from coop_access.window import WindowSchedule, WindowSpec, make_schedule

from scipy.special import expit

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SWEEP_AXES = ('L', 'beta', 'alpha', 'B', 'M', 'd_max', 'T_w', 'iota', 'p_a')


def compute_edr(decisions: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of wrong activity decisions among the N users of a frame"""
    decisions = np.asarray(decisions, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if decisions.shape != truth.shape:
        raise ValueError(f"shape mismatch: {decisions.shape} vs {truth.shape}")
    return float(np.mean(decisions != truth))


def nmse_energies(x_hat: np.ndarray, x_true: np.ndarray, coop_mask: np.ndarray):
    """(error energy, true energy) over cooperating (user, virtual AP) pairs"""
    mask = np.asarray(coop_mask, dtype=bool)
    error = float(np.sum(np.abs(x_hat[mask] - x_true[mask]) ** 2))
    energy = float(np.sum(np.abs(x_true[mask]) ** 2))
    return error, energy


def compute_nmse(x_hat: np.ndarray, x_true: np.ndarray, coop_mask: np.ndarray) -> float:
    """
    NMSE in dB of one frame over the cooperation pairs.

    Args:
        x_hat, x_true: (N, V) estimates and true effective channels
        coop_mask: (N, V) cooperation mask per virtual AP

    Returns:
        NMSE in dB, floored at -200 dB; nan when the true energy is zero
    """
    error, energy = nmse_energies(x_hat, x_true, coop_mask)
    if energy <= 0.0:
        logger.warning("Zero true channel energy; NMSE undefined")
        return float('nan')
    return to_db(error / energy)


def trial_seeds(seed: int, trial: int) -> Dict[str, int]:
    """Independent seeds of one trial derived from (master seed, trial index)"""
    children = np.random.SeedSequence([seed, trial]).spawn(4)
    names = ('layout', 'trace', 'pilots', 'frames')
    return {name: int(child.generate_state(1)[0]) for name, child in zip(names, children)}


@dataclass
class TrialData:
    """Everything generated for one trial before detection"""
    trial: int
    seeds: Dict[str, int]
    layout: NetworkLayout
    trace: ActivityTrace
    pilots: PilotMatrix
    signals: FrameSignals


@dataclass
class TrialOutcome:
    """Per-frame metrics of one trial"""
    trial: int
    edr_per_frame: np.ndarray
    error_energy: np.ndarray
    true_energy: np.ndarray
    non_converged_windows: int = 0
    iteration_log: Dict[int, List[IterationSnapshot]] = field(default_factory=dict)


class SimulationPipeline:
    """Main Monte-Carlo pipeline for cooperative activity detection"""

    def __init__(self, config: ExperimentConfig,
                 progress_callback: Optional[Callable[[str, float], None]] = None,
                 layout: Optional[NetworkLayout] = None, record_iterations: bool = False):
        """
        Initialize the pipeline

        Args:
            config: Validated experiment configuration
            progress_callback: Optional callback for progress updates (message, percent)
            layout: Optional fixed layout used by every trial
            record_iterations: Keep per-iteration snapshots of trial 0
        """
        self.config = config
        self.progress_callback = progress_callback
        self.fixed_layout = layout
        self.record_iterations = record_iterations
        self.iteration_log: Dict[int, List[IterationSnapshot]] = {}

        if self.fixed_layout is None and config.layout_path:
            self.fixed_layout = read_layout(config.layout_path)
            logger.info(f"Using fixed layout from {config.layout_path}")

    def schedule(self) -> WindowSchedule:
        """Window schedule of a trial; CS mode decides every frame on its own"""
        w = self.config.window
        if self.config.inference.mode == DetectionMode.CS:
            return make_schedule(w.n_frames, 1, 1, 0)
        return make_schedule(w.n_frames, w.window_size, w.step, w.target_offset)

    def build_layout(self, seed: int) -> NetworkLayout:
        if self.fixed_layout is not None:
            return self.fixed_layout
        net = self.config.network
        return build_hex_network(net.tiers, net.users_per_cell, net.half_spacing_km, net.d_max_km, seed)

    def generate_trial(self, trial: int) -> TrialData:
        """Layout, trace, pilots and received signals of one trial"""
        cfg = self.config
        seeds = trial_seeds(cfg.seed, trial)
        layout = self.build_layout(seeds['layout'])
        trace = sample_trace(cfg.activity_params(), layout.n_users, cfg.window.n_frames, seeds['trace'])
        pilots = gen_pilots(cfg.pilot_length, layout.n_users, seeds['pilots'])
        signals = synthesize_frames(layout, trace, pilots, cfg.system, seeds['frames'])
        return TrialData(trial=trial, seeds=seeds, layout=layout, trace=trace, pilots=pilots, signals=signals)

    def observation_quantizers(self, layout: NetworkLayout,
                               params: MarkovActivityParams) -> List[UniformQuantizer]:
        """
        Per-AP QF quantizers at the configured resolution.

        Raises:
            ValueError: when the fronthaul budget cannot carry one bit per component
        """
        cfg = self.config
        b_q = cfg.fronthaul.bits_per_sample
        if b_q is None:
            budget = budget_resolve(cfg.fronthaul.budget_bits, FronthaulMode.QF, cfg.pilot_length,
                                    cfg.system.antennas_per_ap, layout.ap_load())
            if not budget.feasible:
                raise ValueError(budget.reason)
            b_q = budget.bits_per_sample
        return build_observation_quantizers(layout, cfg.system, params, cfg.pilot_length,
                                            b_q // 2, cfg.fronthaul.clip)

    def _window_detector(self, layout, signals, params: MarkovActivityParams, hook=None):
        """Callable running one window under the configured fronthaul mode"""
        cfg = self.config
        mode = cfg.fronthaul.mode
        M = cfg.system.antennas_per_ap

        if mode == FronthaulMode.IDEAL:
            detector = ActivityDetector(cfg.inference, hook)
            return lambda window: detector.run_window(signals, layout, params, window)

        if mode == FronthaulMode.QF:
            observation = quantize_observations(signals.y, self.observation_quantizers(layout, params), M)
            return lambda window: qf_detect_window(signals, layout, params, cfg.inference, window, observation,
                                                   cfg.fronthaul.em_in_qf, hook)

        b_d = cfg.fronthaul.bits_per_llr
        if b_d is None:
            budget = budget_resolve(cfg.fronthaul.budget_bits, mode, cfg.pilot_length, M, layout.ap_load())
            if not budget.feasible:
                raise ValueError(budget.reason)
            b_d = budget.bits_per_sample
        quantizer = llr_quantizer(b_d, cfg.fronthaul.llr_clip)
        return lambda window: df_detect_window(signals, layout, params, cfg.inference, window, quantizer)

    def run_trial(self, trial: int) -> TrialOutcome:
        """
        Simulate one trial end to end.

        Args:
            trial: Trial index; seeds derive from (config.seed, trial)

        Returns:
            TrialOutcome with per-frame EDR and NMSE energies
        """
        cfg = self.config
        data = self.generate_trial(trial)
        layout, trace, signals = data.layout, data.trace, data.signals
        params = cfg.activity_params()
        T = cfg.window.n_frames
        N = layout.n_users

        schedule = self.schedule()

        log: Dict[int, List[IterationSnapshot]] = {}
        current = [0]
        hook = None
        if self.record_iterations and trial == 0:
            hook = lambda snapshot: log.setdefault(current[0], []).append(snapshot)
        detect = self._window_detector(layout, signals, params, hook)

        decisions = np.zeros((T, N), dtype=bool)
        x_hat = np.zeros(signals.x_true.shape, dtype=complex)
        non_converged = 0
        for index, window in enumerate(schedule.windows):
            current[0] = index
            result = detect(window)
            targets = list(window.target_frames)
            decisions[targets] = result.decisions
            x_hat[targets] = result.x_hat
            non_converged += 0 if result.converged else 1

        mask = layout.coop_mask[:, signals.ap_of_virtual()]
        edr = np.array([compute_edr(decisions[t], trace.lam[:, t]) for t in range(T)])
        energies = np.array([nmse_energies(x_hat[t], signals.x_true[t], mask) for t in range(T)])
        return TrialOutcome(trial=trial, edr_per_frame=edr, error_energy=energies[:, 0],
                            true_energy=energies[:, 1], non_converged_windows=non_converged,
                            iteration_log=log)

    def _safe_trial(self, trial: int) -> Optional[TrialOutcome]:
        try:
            return self.run_trial(trial)
        except Exception as e:
            logger.error(f"Trial {trial} failed: {e}")
            logger.error(traceback.format_exc())
            return None

    def run(self) -> ProcessingResult:
        """
        Run all trials and aggregate metrics.

        Returns:
            ProcessingResult whose data is a MetricsReport
        """
        cfg = self.config
        errors = cfg.validate()
        if errors:
            return ProcessingResult.error_result(ProcessingStage.CREATED, ValueError("; ".join(errors)))

        try:
            start_time = time.time()
            self._update_progress(f"Running {cfg.trials} trials...", 0.0, ProcessingStage.DETECTING)
            outcomes: List[Optional[TrialOutcome]] = [None] * cfg.trials
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                for done, (trial, outcome) in enumerate(
                        zip(range(cfg.trials), pool.map(self._safe_trial, range(cfg.trials))), start=1):
                    outcomes[trial] = outcome
                    self._update_progress(f"Trial {done}/{cfg.trials}", 100.0 * done / cfg.trials,
                                          ProcessingStage.DETECTING)

            self._update_progress("Aggregating metrics", 100.0, ProcessingStage.AGGREGATING)
            report = aggregate_outcomes(outcomes)
            report.runtime_s = time.time() - start_time
            if self.record_iterations and outcomes[0] is not None:
                self.iteration_log = outcomes[0].iteration_log

            logger.info(f"Completed {report.trials} trials ({report.failed_trials} failed): "
                        f"EDR {report.mean_edr:.4g}, NMSE {report.mean_nmse_db:.2f} dB, "
                        f"{report.runtime_s:.1f}s")
            return ProcessingResult.success_result(ProcessingStage.COMPLETED,
                                                   f"Ran {report.trials} trials", report,
                                                   report.runtime_s)
        except Exception as e:
            logger.error(f"Simulation failed: {e}")
            logger.error(traceback.format_exc())
            self._update_progress(f"Simulation failed: {e}", 0.0, ProcessingStage.FAILED)
            return ProcessingResult.error_result(ProcessingStage.DETECTING, e)

    def _update_progress(self, message: str, percent: float, stage: ProcessingStage):
        """Update progress tracking"""
        if self.progress_callback:
            self.progress_callback(message, percent)
        logger.debug(f"Progress [{stage.value}]: {message} ({percent:.1f}%)")


def aggregate_outcomes(outcomes: Sequence[Optional[TrialOutcome]]) -> MetricsReport:
    """
    Reduce trial outcomes in index order.

    EDR is averaged over trials; NMSE is summed error energy over summed
    true energy. Failed trials (None) are counted and excluded.
    """
    good = [o for o in outcomes if o is not None]
    failed = len(outcomes) - len(good)
    if not good:
        raise RuntimeError(f"all {len(outcomes)} trials failed")
    if failed:
        logger.warning(f"{failed} of {len(outcomes)} trials failed and were excluded")

    edr = np.array([o.edr_per_frame for o in good])
    error = np.array([o.error_energy for o in good]).sum(axis=0)
    energy = np.array([o.true_energy for o in good]).sum(axis=0)

    def ratio_db(err, en):
        return to_db(err / en) if en > 0 else float('nan')

    return MetricsReport(
        edr_per_frame=[float(v) for v in edr.mean(axis=0)],
        nmse_db_per_frame=[ratio_db(e, n) for e, n in zip(error, energy)],
        mean_edr=float(edr.mean()),
        mean_nmse_db=ratio_db(float(error.sum()), float(energy.sum())),
        edr_half_width=edr_half_width(edr.mean(axis=1).tolist()),
        trials=len(good),
        failed_trials=failed,
        non_converged_windows=sum(o.non_converged_windows for o in good),
    )


def run_trials(config: ExperimentConfig, progress_callback: Optional[Callable[[str, float], None]] = None,
               layout: Optional[NetworkLayout] = None) -> MetricsReport:
    """
    Quick Monte-Carlo run

    Raises:
        RuntimeError: when the run fails as a whole
    """
    result = SimulationPipeline(config, progress_callback, layout).run()
    if not result.success:
        raise RuntimeError(result.message) from result.error
    return result.data


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def apply_axis(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """Copy of config with one sweep axis set"""
    if axis == 'L':
        return replace(config, pilot_length=int(value))
    if axis == 'beta':
        return replace(config, traffic=replace(config.traffic, beta=float(value)))
    if axis == 'p_a':
        return replace(config, traffic=replace(config.traffic, p_a=float(value)))
    if axis == 'alpha':
        beta = config.traffic.beta
        p_a = float(value) / (1.0 + float(value) - beta)
        return replace(config, traffic=replace(config.traffic, p_a=p_a))
    if axis == 'B':
        fronthaul = replace(config.fronthaul, budget_bits=int(value), bits_per_sample=None, bits_per_llr=None)
        return replace(config, fronthaul=fronthaul)
    if axis == 'M':
        return replace(config, system=replace(config.system, antennas_per_ap=int(value)))
    if axis == 'd_max':
        return replace(config, network=replace(config.network, d_max_km=float(value)))
    if axis == 'T_w':
        size = int(value)
        step = min(config.window.step, size)
        offset = min(config.window.target_offset, size - step)
        return replace(config, window=replace(config.window, window_size=size, step=step, target_offset=offset))
    if axis == 'iota':
        return replace(config, inference=replace(config.inference, threshold=float(value)))
    raise ValueError(f"Unknown sweep axis '{axis}'. Available: {', '.join(SWEEP_AXES)}")


def format_axis_value(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), '.10g')


def sweep(config: ExperimentConfig, axis: str, values: Sequence, output_path: Optional[str] = None,
          progress_callback: Optional[Callable[[str, float], None]] = None) -> List[Dict[str, Any]]:
    """
    One MetricsReport row per axis value.

    Rows already present in output_path are reused, so an interrupted sweep
    resumes where it stopped. Infeasible values are logged and skipped.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"Unknown sweep axis '{axis}'. Available: {', '.join(SWEEP_AXES)}")
    exporter = ResultExporter()
    existing = {}
    if output_path:
        for row in read_rows_csv(output_path):
            existing[(row['axis'], row['value'])] = row

    rows: List[Dict[str, Any]] = []
    for i, value in enumerate(values):
        key = (axis, format_axis_value(value))
        if key in existing:
            logger.info(f"Sweep {axis}={key[1]} already done, skipping")
            rows.append(existing[key])
            continue
        try:
            point = apply_axis(config, axis, value)
            errors = point.validate()
            if errors:
                raise ValueError("; ".join(errors))
            report = run_trials(point, progress_callback)
        except (ValueError, RuntimeError) as e:
            logger.warning(f"Sweep {axis}={key[1]} skipped: {e}")
            continue
        rows.append({'axis': axis, 'value': key[1], **report.as_row()})
        if output_path:
            exporter.export_sweep(rows, output_path)
        logger.info(f"Sweep {axis}={key[1]} ({i + 1}/{len(values)}): EDR {report.mean_edr:.4g}")

    if output_path:
        exporter.export_sweep(rows, output_path)
    return rows


# ---------------------------------------------------------------------------
# State evolution, oracle and fronthaul comparisons
# ---------------------------------------------------------------------------

def se_check(config: ExperimentConfig, iterations: int = 10, trials: Optional[int] = None,
             window_size: Optional[int] = None) -> List[SeRecord]:
    """
    Compare state-evolution predictions with measured NMSE.

    Each trial runs one window with undamped, fixed-length iterations and
    feeds its snapshots into the recursion; predicted and measured values
    are averaged in linear scale over trials.
    """
    trials = trials or config.trials
    T_w = window_size or config.window.window_size
    inference = replace(config.inference, damping=1.0, eps_conv=0.0, i_max=iterations)
    params = config.activity_params()
    sums = np.zeros((iterations + 1, 3))
    pipeline = SimulationPipeline(config)
    for trial in range(trials):
        seeds = trial_seeds(config.seed, trial)
        layout = pipeline.build_layout(seeds['layout'])
        trace = sample_trace(params, layout.n_users, T_w, seeds['trace'])
        pilots = gen_pilots(config.pilot_length, layout.n_users, seeds['pilots'])
        signals = synthesize_frames(layout, trace, pilots, config.system, seeds['frames'])

        snapshots: List[IterationSnapshot] = []
        ActivityDetector(inference, snapshots.append).run_window(
            signals, layout, params, WindowSpec(t0=0, T_w=T_w, t1=0, delta_w=T_w))
        records = se_run(layout, params, snapshots, config.pilot_length, signals.tx_power,
                         antennas=config.system.antennas_per_ap, samples=config.se_samples,
                         seed=seeds['frames'], activity=trace.lam[:, :T_w])
        for k, record in enumerate(records[:iterations + 1]):
            sums[k] += [10.0 ** (record.predicted_nmse_db / 10.0),
                        10.0 ** (record.measured_nmse_db / 10.0),
                        10.0 ** (record.measured_mse_db / 10.0)]

    means = sums / trials
    return [SeRecord(iteration=k, predicted_nmse_db=to_db(means[k, 0]),
                     measured_nmse_db=to_db(means[k, 1]), measured_mse_db=to_db(means[k, 2]))
            for k in range(iterations + 1)]


def chain_fusion_gap(window_sizes: Sequence[int] = (2, 3, 4, 8), n_users: int = 50,
                     beta: float = 0.9, p_a: float = 0.1, seed: int = 0) -> float:
    """Largest |fused posterior - enumeration smoother| over random evidence"""
    params = MarkovActivityParams.from_steady_state(p_a, beta)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for T_w in window_sizes:
        ratios = np.exp(rng.normal(0.0, 2.0, size=(T_w, n_users)))
        pi_left = clamp(ratios / (1.0 + ratios), 1e-12)
        alpha_n, beta_n, p_n = params.arrays(n_users)
        psi_right, _ = forward_sweep(pi_left, alpha_n, beta_n, p_n)
        _, varphi_right = backward_sweep(pi_left, alpha_n, beta_n)
        fused = expit(fuse_llr(pi_left, psi_right, varphi_right))
        exact = exact_chain_smoother(ratios, params.alpha, params.beta, params.p_a)
        worst = max(worst, float(np.max(np.abs(fused - exact))))
    return worst


def oracle_check(n_users: int = 6, pilot_length: int = 4, window_size: int = 2, trials: int = 100,
                 p_a: float = 0.3, beta: float = 0.9, noise_var: float = 0.05,
                 seed: int = 2024) -> Dict[str, float]:
    """
    Compare the detector against exact references on tiny single-AP instances.

    Returns:
        dict with the chain-fusion gap and the fraction of (trial, frame)
        pairs where the detector and the exact posterior rank the same
        users on top
    """
    params = MarkovActivityParams.from_steady_state(p_a, beta)
    layout = build_custom_layout(np.ones((n_users, 1)))
    system = SystemParams(rho0_dbm=0.0, noise_var_override_mw=noise_var)
    detector = ActivityDetector(InferenceConfig(i_max=200))
    agree = 0
    compared = 0
    for trial in range(trials):
        seeds = trial_seeds(seed, trial)
        trace = sample_trace(params, n_users, window_size, seeds['trace'])
        pilots = gen_pilots(pilot_length, n_users, seeds['pilots'])
        signals = synthesize_frames(layout, trace, pilots, system, seeds['frames'])
        result = detector.run_window(signals, layout, params,
                                     WindowSpec(t0=0, T_w=window_size, t1=0, delta_w=window_size))
        instance = TinyInstance(pilots=pilots.a, y=signals.y, g_eff=signals.tx_power * layout.g_lin,
                                noise_var=signals.noise_var, alpha=params.alpha, beta=params.beta,
                                p=params.p_a)
        exact = exact_activity_posterior(instance)
        for t in range(window_size):
            k = int(trace.lam[:, t].sum())
            if k == 0 or k == n_users:
                continue
            top_detector = set(np.argsort(-result.posterior_active[t], kind='stable')[:k])
            top_exact = set(np.argsort(-exact[t], kind='stable')[:k])
            agree += int(top_detector == top_exact)
            compared += 1
    return {
        'chain_fusion_gap': chain_fusion_gap(seed=seed),
        'ranking_agreement': agree / compared if compared else float('nan'),
        'compared': float(compared),
    }


def qf_df_compare(config: ExperimentConfig, budget_bits: int,
                  antennas: Sequence[int] = (2, 10)) -> List[Dict[str, Any]]:
    """EDR of QF and DF at one fronthaul budget for several antenna counts"""
    rows = []
    for M in antennas:
        for mode in (FronthaulMode.QF, FronthaulMode.DF):
            fronthaul = replace(config.fronthaul, mode=mode, budget_bits=budget_bits,
                                bits_per_sample=None, bits_per_llr=None)
            point = replace(config, fronthaul=fronthaul,
                            system=replace(config.system, antennas_per_ap=M))
            try:
                report = run_trials(point)
            except RuntimeError as e:
                logger.warning(f"{mode.value.upper()} with M={M} failed: {e}")
                continue
            rows.append({'axis': f"{mode.value}_M", 'value': str(M), **report.as_row()})
    return rows


__all__ = [
    'SimulationPipeline',
    'TrialData',
    'TrialOutcome',
    'compute_edr',
    'compute_nmse',
    'nmse_energies',
    'trial_seeds',
    'aggregate_outcomes',
    'run_trials',
    'apply_axis',
    'sweep',
    'se_check',
    'chain_fusion_gap',
    'oracle_check',
    'qf_df_compare',
    'SWEEP_AXES',
]
