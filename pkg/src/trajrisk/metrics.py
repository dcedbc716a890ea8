"""Risk-stratified evaluation metrics.

FDE is the world-frame displacement of the most-likely trajectory at a
given horizon.  KDE-NLL fits, per future step, a 2-D Gaussian
product-kernel KDE to the sampled positions and scores the ground
truth under it, averaging over the steps inside the horizon.
Strata come in two flavours: speed strata from each example's own
history window (vehicles only), and risk strata from the location-risk
weight at the current position.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import (STATIONARY_PATH_THRESHOLD_M, AgentClass, MapSpec,
                      PredictionExample)
from .errors import DomainError, MetricError
from .riskmap import RiskHeatmap, assign_risk_stratum, bin_index, lookup_weight

HORIZONS_S = (1, 2, 3, 4)
FRAME_STEPS_PER_SECOND = 2  # 2 Hz data: horizon h seconds = step 2h
HIGH_SPEED_THRESHOLD = 14.0  # m/s
BANDWIDTH_FLOOR = 1e-3  # metres
LOG_2PI = float(np.log(2.0 * np.pi))


class SpeedStratum(str, Enum):
    STATIONARY = "stationary"
    NON_STATIONARY = "non_stationary"
    HIGH_SPEED = "high_speed"


def horizon_step(horizon_s) -> int:
    step = FRAME_STEPS_PER_SECOND * float(horizon_s)
    if step != int(step) or not 1 <= step <= 8:
        raise MetricError(f"horizon {horizon_s!r} s not on the 2 Hz grid")
    return int(step)


def fde_at(predicted, future, horizon_s) -> float:
    """Displacement error at the given horizon (metres)."""
    t = horizon_step(horizon_s) - 1
    predicted = np.asarray(predicted, float)
    future = np.asarray(future, float)
    return float(np.hypot(*(predicted[t] - future[t])))


def _logsumexp(v: np.ndarray) -> float:
    m = float(v.max())
    return m + float(np.log(np.exp(v - m).sum()))


def kde_nll_per_step(samples, future) -> np.ndarray:
    """Per-step NLL of the ground truth under a sample KDE.

    Bandwidths follow Scott's rule per dimension, n**(-1/6) * std
    (population std), floored at 1 mm so degenerate sample sets stay
    scoreable.
    """
    samples = np.asarray(samples, float)
    future = np.asarray(future, float)
    if samples.ndim != 3 or samples.shape[2] != 2:
        raise MetricError(f"samples shape {samples.shape} is not (n, T, 2)")
    n = samples.shape[0]
    if n < 2:
        raise MetricError("KDE needs at least 2 samples")
    out = np.empty(samples.shape[1])
    factor = n ** (-1.0 / 6.0)
    for t in range(samples.shape[1]):
        S = samples[:, t, :]
        h = np.maximum(factor * S.std(axis=0), BANDWIDTH_FLOOR)
        z = (future[t] - S) / h
        logk = -0.5 * (z * z).sum(axis=1) - LOG_2PI - np.log(h[0] * h[1])
        out[t] = -(_logsumexp(logk) - np.log(n))
    return out


def kde_nll_at(samples, future, horizon_s) -> float:
    """Mean per-step KDE-NLL over the first ``2 * horizon_s`` steps."""
    step = horizon_step(horizon_s)
    return float(kde_nll_per_step(samples, future)[:step].mean())


def classify_speed_stratum(example: PredictionExample,
                           threshold: float = HIGH_SPEED_THRESHOLD
                           ) -> SpeedStratum:
    """Speed stratum of a vehicle example, from its own window."""
    if example.agent_class is not AgentClass.VEHICLE:
        raise DomainError("speed strata are defined for vehicles only")
    if example.window_path_length < STATIONARY_PATH_THRESHOLD_M:
        return SpeedStratum.STATIONARY
    if example.max_history_speed > threshold:
        return SpeedStratum.HIGH_SPEED
    return SpeedStratum.NON_STATIONARY


def boundary_violation(predicted, mapspec: MapSpec) -> bool:
    """True when the final predicted point is outside every drivable rect."""
    final = np.asarray(predicted, float)[-1]
    if not mapspec.drivable:
        return True
    return not any(r.contains(final) for r in mapspec.drivable)


@dataclass
class ExampleMetrics:
    scene_id: str
    agent_id: str
    agent_class: str
    t_ref: int
    risk_weight: float
    risk_stratum: str
    bin_xy: tuple
    speed_stratum: str | None  # vehicles only
    max_history_speed: float
    violation: bool
    fde: dict = field(default_factory=dict)      # horizon_s -> metres
    kde_nll: dict = field(default_factory=dict)  # horizon_s -> nats


def score_example(example: PredictionExample, predicted, samples,
                  heatmap: RiskHeatmap, mapspec: MapSpec,
                  horizons=HORIZONS_S) -> ExampleMetrics:
    """Metrics for one example given its prediction and samples."""
    w = lookup_weight(heatmap, example.current_position)
    stratum = assign_risk_stratum(w, example.agent_class)
    speed = None
    if example.agent_class is AgentClass.VEHICLE:
        speed = classify_speed_stratum(example).value
    per_step = kde_nll_per_step(samples, example.future)
    m = ExampleMetrics(
        scene_id=example.scene_id,
        agent_id=example.agent_id,
        agent_class=example.agent_class.value,
        t_ref=example.t_ref,
        risk_weight=w,
        risk_stratum=stratum.value,
        bin_xy=bin_index(example.current_position, heatmap.extents,
                         heatmap.grid_n),
        speed_stratum=speed,
        max_history_speed=example.max_history_speed,
        violation=boundary_violation(predicted, mapspec),
    )
    for h in horizons:
        step = horizon_step(h)
        m.fde[h] = fde_at(predicted, example.future, h)
        m.kde_nll[h] = float(per_step[:step].mean())
    return m


# --- aggregation ---------------------------------------------------------

VEHICLE_STRATA = ("all", "stationary", "non_stationary", "high_speed",
                  "risk_low", "risk_medium", "risk_high")
VRU_STRATA = ("all", "risk_low", "risk_high")


def _in_stratum(row: ExampleMetrics, stratum: str) -> bool:
    if stratum == "all":
        return True
    if stratum == "stationary":
        return row.speed_stratum == "stationary"
    if stratum == "non_stationary":
        # the non-stationary column includes the high-speed subset
        return row.speed_stratum in ("non_stationary", "high_speed")
    if stratum == "high_speed":
        return row.speed_stratum == "high_speed"
    if stratum.startswith("risk_"):
        return row.risk_stratum == stratum[len("risk_"):]
    raise MetricError(f"unknown stratum {stratum!r}")


@dataclass
class StratifiedReport:
    agent_class: str
    variant: str
    horizons: tuple
    strata: tuple
    counts: dict                 # stratum -> n
    fde: dict                    # (stratum, horizon_s) -> mean
    kde_nll: dict                # (stratum, horizon_s) -> mean
    violation_count: int
    n_examples: int
    bins: dict                   # (bx, by) -> (mean fde@3s, count)

    @property
    def violation_rate(self):
        if self.n_examples == 0:
            return None
        return self.violation_count / self.n_examples


def aggregate_report(rows, agent_class: str, variant: str,
                     horizons=HORIZONS_S) -> StratifiedReport:
    strata = VEHICLE_STRATA if agent_class == "vehicle" else VRU_STRATA
    counts = {}
    fde = {}
    kde = {}
    for stratum in strata:
        sel = [r for r in rows if _in_stratum(r, stratum)]
        counts[stratum] = len(sel)
        for h in horizons:
            if sel:
                fde[(stratum, h)] = float(
                    np.mean([r.fde[h] for r in sel]))
                kde[(stratum, h)] = float(
                    np.mean([r.kde_nll[h] for r in sel]))
    bins = {}
    by_bin = {}
    for r in rows:
        by_bin.setdefault(r.bin_xy, []).append(r.fde[3])
    for key in sorted(by_bin):
        vals = by_bin[key]
        bins[key] = (float(np.mean(vals)), len(vals))
    return StratifiedReport(
        agent_class=agent_class,
        variant=variant,
        horizons=tuple(horizons),
        strata=strata,
        counts=counts,
        fde=fde,
        kde_nll=kde,
        violation_count=sum(1 for r in rows if r.violation),
        n_examples=len(rows),
        bins=bins,
    )


# --- CSV writers ----------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v))


def write_report_csv(reports, path):
    """report.csv: one row per (class, variant, metric, horizon, stratum)."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["agent_class", "variant", "metric", "horizon_s",
                     "stratum", "mean", "count"])
        for rep in reports:
            for metric, table in (("fde", rep.fde), ("kde_nll", rep.kde_nll)):
                for h in rep.horizons:
                    for stratum in rep.strata:
                        n = rep.counts[stratum]
                        mean = _fmt(table[(stratum, h)]) if n else ""
                        wr.writerow([rep.agent_class, rep.variant, metric,
                                     h, stratum, mean, n])


def write_bins_csv(reports, path):
    """bins.csv: vehicle FDE@3s binned on the heatmap grid."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["variant", "bin_x", "bin_y", "mean_fde_3s", "count"])
        for rep in reports:
            if rep.agent_class != "vehicle":
                continue
            for (bx, by), (mean, n) in sorted(rep.bins.items()):
                wr.writerow([rep.variant, bx, by, _fmt(mean), n])


def write_violations_csv(reports, path):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["agent_class", "variant", "violation_rate",
                     "n_violations", "n_examples"])
        for rep in reports:
            rate = "" if rep.violation_rate is None else _fmt(rep.violation_rate)
            wr.writerow([rep.agent_class, rep.variant, rate,
                         rep.violation_count, rep.n_examples])


def write_examples_csv(rows_by_run, path, horizons=HORIZONS_S):
    """Per-example metric dump; rows_by_run maps (class, variant) -> rows."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        header = ["agent_class", "variant", "scene_id", "agent_id", "t_ref",
                  "speed_stratum", "risk_stratum", "risk_weight",
                  "max_history_speed", "bin_x", "bin_y"]
        header += [f"fde_{h}s" for h in horizons]
        header += [f"kde_nll_{h}s" for h in horizons]
        header += ["violation"]
        wr.writerow(header)
        for (cls, variant) in sorted(rows_by_run):
            for r in rows_by_run[(cls, variant)]:
                row = [cls, variant, r.scene_id, r.agent_id, r.t_ref,
                       r.speed_stratum or "", r.risk_stratum,
                       _fmt(r.risk_weight), _fmt(r.max_history_speed),
                       r.bin_xy[0], r.bin_xy[1]]
                row += [_fmt(r.fde[h]) for h in horizons]
                row += [_fmt(r.kde_nll[h]) for h in horizons]
                row += [int(r.violation)]
                wr.writerow(row)
