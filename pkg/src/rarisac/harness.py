"""Monte-Carlo sweeps over one scenario axis, CSV export and aggregation."""

from __future__ import annotations

import csv
import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SCHEMES, run_scheme
from .config import ConfigError, ScenarioConfig, from_flat_dict, parse_kv_text, to_flat_dict
from .numerics import SdpError
from .scenario import make_instance
from .solver import SensingInfeasibleError, SolverReport

log = logging.getLogger(__name__)

AXES = ("snr_db", "n_ris", "crb_eps", "n_cells", "rsr_db", "n_users")
INT_AXES = ("n_ris", "n_cells", "n_users")

RECORD_FIELDS = ("axis", "value", "scheme", "trial", "seed", "U_com_bits", "crb_trace",
                 "iterations", "feasible", "flags")
TIMING_FIELDS = ("axis", "value", "scheme", "trial", "wall_ms")
TRACE_FIELDS = ("iter", "F", "U_com_bits", "crb_trace", "consensus_gap", "admm_iters", "rho1",
                "wall_ms", "scheme")
SUMMARY_FIELDS = ("axis", "value", "scheme", "trials", "feasible_frac", "U_median", "U_q1", "U_q3",
                  "crb_median", "iterations_median")


@dataclass
class SweepSpec:
    axis: str
    values: tuple
    trials: int = 100
    schemes: tuple = SCHEMES
    master_seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = tuple(self.values)
        self.schemes = tuple(self.schemes)
        self.validate()

    def validate(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if self.axis in INT_AXES:
            if any(float(v) != int(v) for v in self.values):
                raise ConfigError(f"{self.axis} values must be integers")
            self.values = tuple(int(v) for v in self.values)
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown scheme(s) {bad}; expected a subset of {', '.join(SCHEMES)}")
        if int(self.master_seed) < 0:
            raise ConfigError("master_seed must be >= 0")
        self.master_seed = int(self.master_seed)


def load_sweep_spec(path) -> SweepSpec:
    """Sweep file: same key/value format as a config file.

    ``axis``, ``values``, ``trials``, ``schemes`` and ``master_seed`` describe the
    sweep; any other key is a scenario override (``[scenario]`` section or
    ``scenario.`` prefix optional).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sweep file not found: {path}")
    kv = parse_kv_text(path.read_text(encoding="utf-8"))
    own = {}
    overrides = {}
    for k, v in kv.items():
        if k in ("axis", "values", "trials", "schemes", "master_seed"):
            own[k] = v
        else:
            overrides[k.removeprefix("scenario.")] = v
    if "axis" not in own or "values" not in own:
        raise ConfigError(f"{path}: sweep file needs 'axis' and 'values'")
    schemes = own.get("schemes", SCHEMES)
    if isinstance(schemes, str):
        schemes = tuple(s.strip() for s in schemes.split(",") if s.strip())
    values = own["values"]
    if not isinstance(values, (list, tuple)):
        values = (values,)
    return SweepSpec(own["axis"], tuple(values), own.get("trials", 100), tuple(schemes),
                     own.get("master_seed", 0), overrides)


def trial_seed(master_seed, axis, trial) -> int:
    """63-bit seed shared by every axis value (common random numbers)."""
    h = hashlib.sha256(f"{int(master_seed)}|{axis}|{int(trial)}".encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


@dataclass
class MetricRecord:
    axis: str
    value: float
    scheme: str
    trial: int
    seed: int
    U_com_bits: float
    crb_trace: float
    iterations: int
    feasible: bool
    wall_ms: float
    flags: str = ""

    def sort_key(self):
        return (self.value, SCHEMES.index(self.scheme), self.trial)


def _record(spec_axis, value, scheme, trial, seed, rep: SolverReport | None, wall_ms, flags=""):
    if rep is None:
        return MetricRecord(spec_axis, value, scheme, trial, seed, math.nan, math.nan, 0, False,
                            wall_ms, flags)
    return MetricRecord(spec_axis, value, scheme, trial, seed, float(rep.U_com_bits),
                        float(rep.crb_trace), int(rep.iterations), bool(rep.feasible),
                        wall_ms, ";".join(rep.flags))


def scenario_at(base_cfg: ScenarioConfig, axis, value) -> ScenarioConfig:
    return base_cfg.replace(**{axis: value})


def _run_trial(args):
    import time
    import warnings

    cfg, axis, value, trial, seed, schemes = args
    out = []
    try:
        inst = make_instance(cfg, seed)
    except Exception as exc:        # noqa: BLE001 - recorded, sweep continues
        return [_record(axis, value, s, trial, seed, None, 0.0, f"instance_failed: {exc}") for s in schemes]
    for scheme in schemes:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rep = run_scheme(scheme, inst.ch, inst.scene, cfg, inst.init_rng())
            out.append(_record(axis, value, scheme, trial, seed, rep,
                               1e3 * (time.perf_counter() - t0)))
        except (SensingInfeasibleError, SdpError, ArithmeticError, ValueError) as exc:
            out.append(_record(axis, value, scheme, trial, seed, None,
                               1e3 * (time.perf_counter() - t0), f"failed: {exc}"))
    return out


def run_sweep(spec: SweepSpec, base_cfg: ScenarioConfig | None = None, workers=1,
              progress=None) -> list[MetricRecord]:
    """All (value, trial, scheme) records, canonically sorted.

    Results do not depend on ``workers``: every trial owns its seed and
    random streams.
    """
    base_cfg = ScenarioConfig() if base_cfg is None else base_cfg
    if spec.overrides:
        flat = to_flat_dict(base_cfg)
        flat.update(spec.overrides)
        base_cfg = from_flat_dict(flat)
    tasks = []
    for value in spec.values:
        cfg = scenario_at(base_cfg, spec.axis, value)
        for trial in range(spec.trials):
            tasks.append((cfg, spec.axis, value, trial, trial_seed(spec.master_seed, spec.axis, trial),
                          spec.schemes))
    records = []
    if workers <= 1:
        results = map(_run_trial, tasks)
        for i, recs in enumerate(results):
            records.extend(recs)
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, recs in enumerate(pool.map(_run_trial, tasks, chunksize=1)):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(tasks))
    records.sort(key=MetricRecord.sort_key)
    return records


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def export_csv(records, path, timing_path=None):
    """Write the deterministic record table; wall-clock times go to ``timing_path``."""
    records = sorted(records, key=MetricRecord.sort_key)
    p = _write_rows(path, RECORD_FIELDS, ([getattr(r, f) for f in RECORD_FIELDS] for r in records))
    if timing_path is not None:
        _write_rows(timing_path, TIMING_FIELDS, ([getattr(r, f) for f in TIMING_FIELDS] for r in records))
    return p


def export_trace(report: SolverReport, path):
    rows = ([r.iter, r.F, r.U_com_bits, r.crb_trace, r.consensus_gap, r.admm_iters, r.rho1,
             r.wall_ms, report.scheme] for r in report.rows)
    return _write_rows(path, TRACE_FIELDS, rows)


def read_csv(path):
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate(records):
    """Median and interquartile range of U_com per (value, scheme)."""
    groups = {}
    for r in records:
        groups.setdefault((r.axis, r.value, r.scheme), []).append(r)
    out = []
    for (axis, value, scheme), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], SCHEMES.index(kv[0][2]))):
        U = np.array([r.U_com_bits for r in rs], dtype=float)
        U = U[np.isfinite(U)]
        crb = np.array([r.crb_trace for r in rs], dtype=float)
        crb = crb[np.isfinite(crb)]
        its = np.array([r.iterations for r in rs], dtype=float)
        q1, med, q3 = np.percentile(U, [25, 50, 75]) if U.size else (math.nan,) * 3
        out.append({"axis": axis, "value": value, "scheme": scheme, "trials": len(rs),
                    "feasible_frac": float(np.mean([r.feasible for r in rs])),
                    "U_median": float(med), "U_q1": float(q1), "U_q3": float(q3),
                    "crb_median": float(np.median(crb)) if crb.size else math.nan,
                    "iterations_median": float(np.median(its))})
    return out


def export_summary(summary, path):
    return _write_rows(path, SUMMARY_FIELDS, ([row[f] for f in SUMMARY_FIELDS] for row in summary))
