#!/usr/bin/env python3
"""
Coop Access - cooperative grant-free access simulator
Main Entry Point

Generate networks, run Monte-Carlo detection experiments, parameter sweeps
and the state-evolution, oracle and fronthaul comparisons from the command line.
"""

import sys
import os
import argparse
from pathlib import Path

# Add project root to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)


def check_dependencies():
    """Check if required dependencies are installed"""
    missing_deps = []

    try:
        import numpy
    except ImportError:
        missing_deps.append("numpy")

    try:
        import scipy
    except ImportError:
        missing_deps.append("scipy")

    try:
        from dotenv import load_dotenv
    except ImportError:
        missing_deps.append("python-dotenv")

    if missing_deps:
        print("❌ Missing required dependencies:")
        for dep in missing_deps:
            print(f"   - {dep}")
        print("\nInstall with: pip install " + " ".join(missing_deps))
        return False

    return True


def validate_output_path(output_path):
    """Validate output path is writable"""
    if not output_path:
        return True

    output_path = Path(output_path)

    parent_dir = output_path.parent
    if not parent_dir.exists():
        try:
            parent_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            print(f"❌ Cannot create output directory {parent_dir}: {e}")
            return False

    if not os.access(parent_dir, os.W_OK):
        print(f"❌ Output directory not writable: {parent_dir}")
        return False

    if output_path.exists() and not os.access(output_path, os.W_OK):
        print(f"❌ Output file not writable: {output_path}")
        return False

    return True


def progress_callback(message, percent):
    print(f"[{percent:5.1f}%] {message}")


def parse_values(text, kind=float):
    """Comma-separated list, e.g. '1,2,4'"""
    if not text:
        return []
    return [kind(item) for item in text.split(',') if item.strip()]


def flag_overrides(args):
    """Map CLI flags onto config keys; unset flags are left out"""
    mapping = {
        'tiers': 'NETWORK_TIERS',
        'users_per_cell': 'NETWORK_USERS_PER_CELL',
        'd_max': 'NETWORK_D_MAX_KM',
        'p_a': 'TRAFFIC_P_A',
        'beta': 'TRAFFIC_BETA',
        'antennas': 'SYSTEM_ANTENNAS_PER_AP',
        'frames': 'WINDOW_N_FRAMES',
        'window': 'WINDOW_WINDOW_SIZE',
        'step': 'WINDOW_STEP',
        'target_offset': 'WINDOW_TARGET_OFFSET',
        'max_iterations': 'INFERENCE_I_MAX',
        'threshold': 'INFERENCE_THRESHOLD',
        'detector': 'INFERENCE_MODE',
        'mode': 'FRONTHAUL_MODE',
        'fronthaul_bits': 'FRONTHAUL_BUDGET_BITS',
        'bq': 'FRONTHAUL_BITS_PER_SAMPLE',
        'bd': 'FRONTHAUL_BITS_PER_LLR',
        'pilot_length': 'EXPERIMENT_PILOT_LENGTH',
        'trials': 'EXPERIMENT_TRIALS',
        'seed': 'EXPERIMENT_SEED',
        'workers': 'EXPERIMENT_WORKERS',
        'layout': 'EXPERIMENT_LAYOUT_PATH',
    }
    overrides = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value if isinstance(value, str) else str(value)
    for item in args.set or []:
        if '=' not in item:
            raise ValueError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split('=', 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_config(args):
    """Load the experiment configuration or print why it is invalid"""
    from coop_access.config import load_config
    try:
        return load_config(path=args.config, preset=args.preset, overrides=flag_overrides(args))
    except (ValueError, FileNotFoundError) as e:
        print(f"❌ {e}")
        return None


def write_manifest(config, output_path, extra=None):
    from coop_access.data_export import ResultExporter, manifest_path_for
    ResultExporter().export_manifest(config, manifest_path_for(output_path), extra)


def command_gen_net(args):
    """Generate a hexagonal layout and write it to disk"""
    from coop_access.data_export import write_layout
    from coop_access.netgen import build_hex_network, summarize_layout

    config = build_config(args)
    if config is None:
        return False
    net = config.network
    print(f"📡 Building {net.n_aps}-cell network with {net.users_per_cell} users per cell...")
    layout = build_hex_network(net.tiers, net.users_per_cell, net.half_spacing_km, net.d_max_km, config.seed)
    for line in summarize_layout(layout):
        print(f"   {line}")

    output_path = args.output or "layout.txt"
    if not validate_output_path(output_path):
        return False
    write_layout(layout, output_path)
    print(f"✅ Layout written to: {output_path}")
    return True


def export_trial_artifacts(pipeline, args):
    """Trace, received signals and QF codebooks of trial 0"""
    if not (args.trace_out or args.dump_received or args.codebook_out or args.show_complexity):
        return True
    import numpy as np
    from coop_access.core.models import FronthaulMode
    from coop_access.data_export import ResultExporter, dump_received, write_trace_csv
    from coop_access.inference import complexity_per_user

    config = pipeline.config
    try:
        data = pipeline.generate_trial(0)
    except (ValueError, OSError) as e:
        print(f"❌ Could not generate trial 0: {e}")
        return False

    if args.trace_out and validate_output_path(args.trace_out):
        write_trace_csv(data.trace, args.trace_out)
        print(f"📤 Activity trace of trial 0: {args.trace_out}")

    if args.dump_received and validate_output_path(args.dump_received):
        header = dump_received(data.signals.y, args.dump_received, {
            'seed': config.seed,
            'trial': 0,
            'trial_seeds': data.seeds,
            'config': config.to_dict(),
        })
        print(f"📤 Received signals of trial 0: {args.dump_received} (header {header})")

    if args.codebook_out:
        if config.fronthaul.mode != FronthaulMode.QF:
            print("⚠️  --codebook-out only applies to --mode qf")
        elif validate_output_path(args.codebook_out):
            try:
                quantizers = pipeline.observation_quantizers(data.layout, config.activity_params())
            except ValueError as e:
                print(f"❌ {e}")
                return False
            ResultExporter().export_codebook(quantizers, args.codebook_out)
            print(f"📤 Quantizer codebooks: {args.codebook_out}")

    if args.show_complexity:
        layout = data.layout
        w = config.window
        per_user = complexity_per_user(
            config.pilot_length, layout.n_users, layout.n_aps, config.system.antennas_per_ap,
            float(np.mean(layout.ap_load())), float(np.mean(layout.coop_sizes())),
            window_size=w.window_size, target_size=w.step, mode=config.inference.mode)
        print(f"🧮 Complex multiplications per user and decided frame: {per_user:.4g}")
    return True


def command_simulate(args):
    """Monte-Carlo run producing per-frame metrics"""
    from coop_access.core.pipeline import SimulationPipeline
    from coop_access.data_export import ResultExporter

    config = build_config(args)
    if config is None:
        return False
    output_path = args.output or config.output_path or "metrics.csv"
    if not validate_output_path(output_path):
        return False

    print(f"🎯 {config.trials} trials, {config.inference.mode.value.upper()} detector, "
          f"{config.fronthaul.mode.value.upper()} fronthaul")
    pipeline = SimulationPipeline(config, progress_callback, record_iterations=bool(args.iterations_out))
    if args.show_schedule:
        schedule = pipeline.schedule()
        print(schedule.table())
        print(f"⏱️  Mean decision latency: {schedule.mean_latency():.2f} frames")

    if not export_trial_artifacts(pipeline, args):
        return False
    result = pipeline.run()
    if not result.success:
        print(f"❌ Simulation failed: {result.message}")
        return False

    report = result.data
    exporter = ResultExporter()
    if not exporter.export_metrics(report, output_path):
        return False
    if args.iterations_out:
        exporter.export_iterations(pipeline.iteration_log, args.iterations_out)
    write_manifest(config, output_path, {'runtime_s': report.runtime_s})

    print(f"\n🎉 Simulation completed!")
    print(f"📊 Mean EDR: {report.mean_edr:.4g} ± {report.edr_half_width:.2g}")
    print(f"📊 Mean NMSE: {report.mean_nmse_db:.2f} dB")
    if report.failed_trials:
        print(f"⚠️  {report.failed_trials} trials failed")
    if report.non_converged_windows:
        print(f"⚠️  {report.non_converged_windows} windows hit the iteration limit")
    print(f"📤 Results exported to: {output_path}")
    return True


def command_write_config(args):
    """Write the resolved configuration as a KEY=value file"""
    from coop_access.config import write_config

    config = build_config(args)
    if config is None:
        return False
    output_path = args.output or "experiment.env"
    if not validate_output_path(output_path) or not write_config(config, output_path):
        return False
    print(f"📤 Configuration written to: {output_path}")
    return True


def command_sweep(args):
    """One metrics row per value of the chosen axis"""
    from coop_access.core.pipeline import sweep

    config = build_config(args)
    if config is None:
        return False
    output_path = args.output or f"sweep_{args.axis}.csv"
    if not validate_output_path(output_path):
        return False

    kind = int if args.axis in ('L', 'B', 'M', 'T_w') else float
    try:
        values = parse_values(args.values, kind)
    except ValueError as e:
        print(f"❌ Invalid --values: {e}")
        return False

    print(f"📈 Sweeping {args.axis} over {values}")
    rows = sweep(config, args.axis, values, output_path, progress_callback)
    write_manifest(config, output_path, {'axis': args.axis, 'values': values})
    print(f"✅ {len(rows)} rows written to: {output_path}")
    return True


def command_se_check(args):
    """State-evolution prediction against measured NMSE"""
    from coop_access.core.pipeline import se_check
    from coop_access.data_export import ResultExporter

    config = build_config(args)
    if config is None:
        return False
    output_path = args.output or "se_check.csv"
    if not validate_output_path(output_path):
        return False

    print(f"🔁 State evolution over {args.iterations} iterations, {config.trials} trials...")
    records = se_check(config, iterations=args.iterations)
    ResultExporter().export_se(records, output_path)
    write_manifest(config, output_path, {'iterations': args.iterations})
    for record in records:
        print(f"   it {record.iteration:2d}: SE {record.predicted_nmse_db:8.3f} dB, "
              f"measured {record.measured_nmse_db:8.3f} dB")
    print(f"✅ Results exported to: {output_path}")
    return True


def command_oracle_check(args):
    """Exact-posterior comparison on tiny instances"""
    from coop_access.core.pipeline import oracle_check

    seed = args.seed if args.seed is not None else 2024
    trials = args.trials if args.trials is not None else 100
    print(f"🔍 Oracle check over {trials} tiny instances...")
    summary = oracle_check(trials=trials, seed=seed)
    print(f"   chain fusion gap:   {summary['chain_fusion_gap']:.3e}")
    print(f"   ranking agreement:  {summary['ranking_agreement']:.3f} "
          f"({int(summary['compared'])} frames compared)")
    return True


def command_qf_df_compare(args):
    """QF against DF at one fronthaul budget"""
    from coop_access.core.pipeline import qf_df_compare
    from coop_access.data_export import ResultExporter

    config = build_config(args)
    if config is None:
        return False
    if args.fronthaul_bits is None:
        print("❌ qf-df-compare needs --fronthaul-bits")
        return False
    output_path = args.output or "qf_df_compare.csv"
    if not validate_output_path(output_path):
        return False

    antennas = parse_values(args.antenna_list, int) or [2, 10]
    rows = qf_df_compare(config, args.fronthaul_bits, antennas)
    ResultExporter().export_sweep(rows, output_path)
    write_manifest(config, output_path, {'budget_bits': args.fronthaul_bits, 'antennas': antennas})
    for row in rows:
        print(f"   {row['axis']}={row['value']}: EDR {row['mean_edr']}")
    print(f"✅ Results exported to: {output_path}")
    return True


def show_version():
    """Show version information"""
    from coop_access import VERSION_STRING
    print(VERSION_STRING)
    print("Cooperative activity detection with sliding-window message passing")
    print("")
    print("Features:")
    print("• Hexagonal multi-cell networks with user-centric cooperation")
    print("• Markov user activity with forward/backward refinement")
    print("• GAMP channel estimation with EM noise learning")
    print("• State evolution and exact oracles for cross-checking")
    print("• Quantize-and-forward and detect-and-forward fronthaul")


def show_examples():
    """Show usage examples"""
    print("Coop Access Usage Examples:")
    print("")
    print("1. Generate and save a network:")
    print("   python run.py gen-net --preset desk -o layout.txt")
    print("")
    print("2. Desk-scale simulation:")
    print("   python run.py simulate --preset desk -o metrics.csv")
    print("   python run.py simulate --preset desk --detector cs --beta 0.9")
    print("")
    print("3. Finite fronthaul:")
    print("   python run.py simulate --preset desk --mode qf --bq 14")
    print("   python run.py simulate --preset desk --mode df --fronthaul-bits 4000")
    print("")
    print("4. Sweeps (resumable):")
    print("   python run.py sweep --preset desk --axis T_w --values 1,2,4,6")
    print("   python run.py sweep --preset desk --axis d_max --values 0.9,1.7,2.2,3.0")
    print("")
    print("5. Cross-checks:")
    print("   python run.py se-check --preset desk --iterations 10")
    print("   python run.py oracle-check --trials 50")
    print("   python run.py qf-df-compare --preset desk --fronthaul-bits 8000 --antenna-list 2,10")
    print("")
    print("6. Trial artifacts and configuration files:")
    print("   python run.py simulate --preset desk --mode qf --bq 14 --codebook-out codebook.csv --trace-out trace.csv")
    print("   python run.py simulate --preset desk --dump-received y.bin --show-complexity")
    print("   python run.py write-config --preset desk -o desk.env")
    print("")
    print("7. Check system setup:")
    print("   python run.py --check-deps")


def add_config_arguments(parser):
    """Flags shared by every experiment subcommand; each mirrors a config key"""
    parser.add_argument('--config', help='KEY=value config file')
    parser.add_argument('--preset', choices=['full', 'desk'], help='Start from a preset')
    parser.add_argument('--set', action='append', metavar='KEY=VALUE', help='Any config key (repeatable)')
    parser.add_argument('--tiers', type=int, help='Hexagonal tiers (1 -> 1 cell, 2 -> 7, 3 -> 19)')
    parser.add_argument('--users-per-cell', type=int, help='Users dropped per cell')
    parser.add_argument('--d-max', type=float, help='Cooperation radius in km')
    parser.add_argument('--p-a', type=float, help='Steady-state activity probability')
    parser.add_argument('--beta', type=float, help='Probability of staying active')
    parser.add_argument('--antennas', type=int, help='Antennas per AP')
    parser.add_argument('--frames', type=int, help='Frames per trial')
    parser.add_argument('--window', type=int, help='Window size T_w')
    parser.add_argument('--step', type=int, help='Window step')
    parser.add_argument('--target-offset', type=int, help='Offset of the target frames inside the window')
    parser.add_argument('--max-iterations', type=int, help='Iteration cap per window')
    parser.add_argument('--threshold', type=float, help='LLR decision threshold')
    parser.add_argument('--detector', choices=['dcs', 'cs'], help='Temporal (dcs) or per-frame (cs) detection')
    parser.add_argument('--mode', choices=['ideal', 'qf', 'df'], help='Fronthaul mode')
    parser.add_argument('--fronthaul-bits', type=int, help='Fronthaul budget per AP and frame')
    parser.add_argument('--bq', type=int, help='QF bits per complex sample')
    parser.add_argument('--bd', type=int, help='DF bits per LLR')
    parser.add_argument('-L', '--pilot-length', type=int, help='Pilot length')
    parser.add_argument('--trials', type=int, help='Monte-Carlo trials')
    parser.add_argument('--seed', type=int, help='Master seed')
    parser.add_argument('--workers', type=int, help='Parallel trial workers')
    parser.add_argument('--layout', help='Fixed layout file (from gen-net)')
    parser.add_argument('-o', '--output', help='Output file path')


def build_parser():
    parser = argparse.ArgumentParser(
        description='Coop Access - cooperative grant-free access simulator',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run.py simulate --preset desk                 # Desk-scale run
  python run.py sweep --preset desk --axis L --values 20,40,60
  python run.py --examples                             # More examples
        """
    )
    parser.add_argument('--version', action='store_true', help='Show version information')
    parser.add_argument('--examples', action='store_true', help='Show usage examples')
    parser.add_argument('--check-deps', action='store_true', help='Check dependencies and exit')

    commands = parser.add_subparsers(dest='command')

    add_config_arguments(commands.add_parser('gen-net', help='Generate a network layout'))
    add_config_arguments(commands.add_parser('write-config', help='Write the resolved configuration'))

    simulate = commands.add_parser('simulate', help='Run Monte-Carlo trials')
    add_config_arguments(simulate)
    simulate.add_argument('--iterations-out', help='CSV of per-iteration diagnostics of trial 0')
    simulate.add_argument('--show-schedule', action='store_true', help='Print the window schedule')
    simulate.add_argument('--trace-out', help='CSV of the activity trace of trial 0')
    simulate.add_argument('--dump-received', help='Binary dump of the received signals of trial 0')
    simulate.add_argument('--codebook-out', help='CSV of the QF quantizer codebooks of trial 0')
    simulate.add_argument('--show-complexity', action='store_true', help='Print multiplications per user')

    sweep_parser = commands.add_parser('sweep', help='Sweep one parameter')
    add_config_arguments(sweep_parser)
    sweep_parser.add_argument('--axis', required=True,
                              choices=['L', 'beta', 'alpha', 'B', 'M', 'd_max', 'T_w', 'iota', 'p_a'])
    sweep_parser.add_argument('--values', required=True, help='Comma-separated values')

    se_parser = commands.add_parser('se-check', help='State evolution against simulation')
    add_config_arguments(se_parser)
    se_parser.add_argument('--iterations', type=int, default=10, help='Iterations to track (default: 10)')

    oracle_parser = commands.add_parser('oracle-check', help='Exact-posterior cross-check')
    oracle_parser.add_argument('--trials', type=int, help='Tiny instances (default: 100)')
    oracle_parser.add_argument('--seed', type=int, help='Master seed (default: 2024)')

    compare = commands.add_parser('qf-df-compare', help='QF versus DF at a fixed budget')
    add_config_arguments(compare)
    compare.add_argument('--antenna-list', default='2,10', help='Comma-separated antenna counts')

    return parser


COMMANDS = {
    'gen-net': command_gen_net,
    'simulate': command_simulate,
    'write-config': command_write_config,
    'sweep': command_sweep,
    'se-check': command_se_check,
    'oracle-check': command_oracle_check,
    'qf-df-compare': command_qf_df_compare,
}


def main(argv=None):
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        show_version()
        return 0

    if args.examples:
        show_examples()
        return 0

    if args.check_deps:
        print("🔍 Checking dependencies...")
        if check_dependencies():
            print("✅ All dependencies are installed!")
            return 0
        return 1

    if not args.command:
        parser.print_help()
        return 1

    if not check_dependencies():
        return 1

    try:
        success = COMMANDS[args.command](args)
    except ValueError as e:
        print(f"❌ {e}")
        return 1
    return 0 if success else 1


if __name__ == "__main__":
    try:
        exit_code = main()
        sys.exit(exit_code)
    except KeyboardInterrupt:
        print("\n❌ Interrupted by user")
        sys.exit(1)
    except Exception as e:
        print(f"❌ Unexpected error: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
