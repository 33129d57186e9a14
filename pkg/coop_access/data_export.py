"""
Data Export Module - files produced and consumed by the simulator

Layouts and activity traces are plain text with a reader for each; the
received-signal tensor is raw little-endian float64 with a JSON header;
metrics, sweeps, state-evolution comparisons, iteration traces and
quantizer codebooks are CSV with a versioned header comment; every run
writes a JSON manifest.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from coop_access import VERSION_STRING
from coop_access.netgen import NetworkLayout, layout_from_arrays
from coop_access.traffic import ActivityTrace

logger = logging.getLogger(__name__)

LAYOUT_HEADER = "# coop-access layout v1"
METRICS_HEADER = "# coop-access metrics v1"
SWEEP_HEADER = "# coop-access sweep v1"
SE_HEADER = "# coop-access se v1"
ITERATIONS_HEADER = "# coop-access iterations v1"
CODEBOOK_HEADER = "# coop-access codebook v1"

METRICS_COLUMNS = ['frame', 'edr', 'nmse_db']
SWEEP_COLUMNS = ['axis', 'value', 'trials', 'failed_trials', 'non_converged_windows',
                 'mean_edr', 'edr_half_width', 'mean_nmse_db']
SE_COLUMNS = ['iteration', 'predicted_nmse_db', 'measured_nmse_db', 'measured_mse_db']
ITERATION_COLUMNS = ['window', 'iteration', 'nmse_db', 'relative_change', 'sigma_eff_sq_mean',
                     'mean_pi_left', 'mean_pi_right', 'mean_phi_left']
CODEBOOK_COLUMNS = ['ap', 'index', 'lower', 'upper', 'level']

PathLike = Union[str, Path]


# ---------------------------------------------------------------------------
# Layouts and traces
# ---------------------------------------------------------------------------

def write_layout(layout: NetworkLayout, path: PathLike) -> None:
    """Write positions and path losses in the sectioned layout text format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        f.write(f"{LAYOUT_HEADER}\n")
        f.write("[meta]\n")
        f.write(f"d_max_km,{layout.d_max_km!r}\n")
        f.write(f"half_spacing_km,{layout.half_spacing_km!r}\n")
        writer = csv.writer(f, lineterminator='\n')
        f.write("[aps]\n")
        writer.writerows([[repr(float(v)) for v in row] for row in layout.ap_positions])
        f.write("[users]\n")
        writer.writerows([[repr(float(v)) for v in row] for row in layout.user_positions])
        f.write("[path_loss_db]\n")
        writer.writerows([[repr(float(v)) for v in row] for row in layout.path_loss_db])
    logger.info(f"Layout written to {path}")


def read_layout(path: PathLike) -> NetworkLayout:
    """
    Read a layout written by write_layout.

    Cooperation sets are re-derived from the stored positions and d_max.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Layout file not found: {path}")
    sections: Dict[str, List[List[str]]] = {}
    current = None
    with open(path, newline='', encoding='utf-8') as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != LAYOUT_HEADER:
        raise ValueError(f"{path}: missing '{LAYOUT_HEADER}' header")
    for row in csv.reader(lines[1:]):
        if not row or row[0].startswith('#'):
            continue
        if row[0].startswith('[') and row[0].endswith(']'):
            current = row[0][1:-1]
            sections[current] = []
            continue
        if current is None:
            raise ValueError(f"{path}: data before the first section")
        sections[current].append(row)

    missing = [s for s in ('meta', 'aps', 'users', 'path_loss_db') if s not in sections]
    if missing:
        raise ValueError(f"{path}: missing sections {missing}")
    meta = {row[0]: float(row[1]) for row in sections['meta']}
    return layout_from_arrays(
        np.array(sections['aps'], dtype=float),
        np.array(sections['users'], dtype=float),
        np.array(sections['path_loss_db'], dtype=float),
        d_max_km=meta['d_max_km'],
        half_spacing_km=meta['half_spacing_km'],
    )


def write_trace_csv(trace: ActivityTrace, path: PathLike) -> None:
    """One row per user, one 0/1 column per frame"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([f"t{t}" for t in range(trace.frame_count)])
        writer.writerows(trace.lam.astype(int).tolist())


def read_trace_csv(path: PathLike) -> ActivityTrace:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Trace file not found: {path}")
    with open(path, newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    return ActivityTrace(lam=np.array(rows[1:], dtype=int).astype(bool))


def dump_received(y: np.ndarray, path: PathLike, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Dump a complex tensor as interleaved little-endian float64.

    A JSON header with the shape (plus any metadata such as seed and
    parameters) is written next to it with suffix .hdr.

    Returns:
        Path of the header file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    y = np.ascontiguousarray(y, dtype=np.complex128)
    y.view(np.float64).astype('<f8').tofile(path)
    header = path.with_suffix('.hdr')
    info = {
        'format': 'interleaved re/im float64 little-endian, C order',
        'shape': list(y.shape),
        'version': VERSION_STRING,
    }
    if metadata:
        info['metadata'] = metadata
    header.write_text(json.dumps(info, indent=2, default=str), encoding='utf-8')
    return header


def load_received(path: PathLike) -> np.ndarray:
    path = Path(path)
    header = path.with_suffix('.hdr')
    if not path.exists() or not header.exists():
        raise FileNotFoundError(f"Received-signal dump or header missing: {path}")
    shape = tuple(json.loads(header.read_text(encoding='utf-8'))['shape'])
    raw = np.fromfile(path, dtype='<f8')
    return raw.view(np.complex128).reshape(shape)


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def read_rows_csv(path: PathLike) -> List[Dict[str, str]]:
    """Rows of a report CSV, skipping comment lines"""
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline='', encoding='utf-8') as f:
        lines = [line for line in f.read().splitlines() if line and not line.startswith('#')]
    return list(csv.DictReader(lines))


class ResultExporter:
    """Writes report CSVs and run manifests"""

    def __init__(self, float_format: str = ".10g"):
        """
        Initialize exporter

        Args:
            float_format: Format spec for floating-point cells
        """
        self.float_format = float_format

    def export_metrics(self, report, output_path: PathLike) -> bool:
        """Per-frame EDR and NMSE of a MetricsReport"""
        rows = [
            {'frame': t, 'edr': self._cell(edr), 'nmse_db': self._cell(nmse)}
            for t, (edr, nmse) in enumerate(zip(report.edr_per_frame, report.nmse_db_per_frame))
        ]
        return self._write_csv(output_path, METRICS_HEADER, METRICS_COLUMNS, rows)

    def export_sweep(self, rows: Sequence[Dict[str, Any]], output_path: PathLike) -> bool:
        return self._write_csv(output_path, SWEEP_HEADER, SWEEP_COLUMNS, rows)

    def export_se(self, records: Iterable, output_path: PathLike) -> bool:
        """Predicted versus measured NMSE per iteration"""
        return self._write_csv(output_path, SE_HEADER, SE_COLUMNS, [r.as_row() for r in records])

    def export_iterations(self, snapshots_by_window: Dict[int, Sequence], output_path: PathLike) -> bool:
        rows = []
        for window, snapshots in sorted(snapshots_by_window.items()):
            for snapshot in snapshots:
                rows.append({'window': window, **snapshot.as_row()})
        return self._write_csv(output_path, ITERATIONS_HEADER, ITERATION_COLUMNS, rows)

    def export_codebook(self, quantizers: Sequence, output_path: PathLike) -> bool:
        """Thresholds and levels of one quantizer per AP"""
        rows = []
        for ap, quantizer in enumerate(quantizers):
            for entry in quantizer.codebook():
                rows.append({
                    'ap': ap,
                    'index': entry['index'],
                    'lower': self._cell(entry['lower']),
                    'upper': self._cell(entry['upper']),
                    'level': self._cell(entry['level']),
                })
        return self._write_csv(output_path, CODEBOOK_HEADER, CODEBOOK_COLUMNS, rows)

    def export_manifest(self, config, output_path: PathLike,
                        extra: Optional[Dict[str, Any]] = None) -> bool:
        """JSON echo of the configuration, seed and version"""
        try:
            manifest = {
                'version': VERSION_STRING,
                'seed': config.seed,
                'config': config.to_dict(),
            }
            if extra:
                manifest.update(extra)
            path = Path(output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str), encoding='utf-8')
            logger.info(f"✅ Manifest written to: {path}")
            return True
        except (OSError, TypeError) as e:
            logger.error(f"❌ Manifest export failed: {e}")
            return False

    def _cell(self, value) -> str:
        if isinstance(value, str):
            return value
        return format(float(value), self.float_format)

    def _write_csv(self, output_path: PathLike, header: str, columns: List[str],
                   rows: Iterable[Dict[str, Any]]) -> bool:
        try:
            path = Path(output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w', newline='', encoding='utf-8') as f:
                f.write(f"{header}\n")
                writer = csv.DictWriter(f, fieldnames=columns, lineterminator='\n', extrasaction='ignore')
                writer.writeheader()
                writer.writerows(rows)
            logger.info(f"✅ Wrote {path}")
            return True
        except OSError as e:
            logger.error(f"❌ CSV export failed: {e}")
            return False


def manifest_path_for(output_path: PathLike) -> Path:
    """Manifest location next to a CSV output"""
    path = Path(output_path)
    return path.with_name(path.stem + '.manifest.json')


__all__ = [
    'write_layout',
    'read_layout',
    'write_trace_csv',
    'read_trace_csv',
    'dump_received',
    'load_received',
    'read_rows_csv',
    'ResultExporter',
    'manifest_path_for',
    'SWEEP_COLUMNS',
    'SWEEP_HEADER',
]
