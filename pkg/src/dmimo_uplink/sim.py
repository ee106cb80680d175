"""Monte Carlo driver: sweeps, per-trial pipelines, aggregation, figure presets and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .capacity import (
    CjtSubsetEvaluator,
    MaxMinSolverConfig,
    NcjtSubsetEvaluator,
    phase1_maxmin_precoder,
    phase1_rate_identity,
)
from .mimo import draw_channels
from .rf_env import (
    LinkBudget,
    Placement,
    PowerMode,
    ScenarioConfig,
    link_budget,
    place_mdaa,
    resolve_los,
    shadowing_draw,
)
from .selection import SELECTORS, Method, Objective

log = logging.getLogger(__name__)

Z95 = 1.959963984540054


class SweepVariable(str, enum.Enum):
    BS_DISTANCE = "BsDistance"
    NUM_UES = "NumUes"  # total transmitting UEs U, serving UE included
    MDAA_RADIUS = "MdaaRadius"


class SchemeKind(str, enum.Enum):
    PHASE1_ONLY = "Phase1Only"
    PHASE2_CJT = "Phase2CJT"
    PHASE2_NCJT = "Phase2NCJT"
    DMIMO_CJT = "DmimoCJT"
    DMIMO_NCJT = "DmimoNCJT"
    BASELINE = "Baseline"


SCHEME_ORDER = list(SchemeKind)
METHOD_ORDER = [Method.ALL, Method.GREEDY, Method.EXHAUSTIVE]

DEFAULT_DISTANCES = tuple(float(d) for d in range(100, 1001, 100))
DEFAULT_RADII = (10.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0, 175.0, 200.0)
DEFAULT_TRIALS = 500

CSV_COLUMNS = (
    "sweep_variable",
    "sweep_value",
    "scheme",
    "power_mode",
    "mean_rate_bps_hz",
    "mean_bits_per_s",
    "relative_improvement",
    "mean_selected_ues",
    "trials",
    "ci95_halfwidth",
)


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep of one scenario.

    ``phase1_maxmin`` adds the max-min precoder series to ``Phase1Only``;
    ``objective`` is what the D-MIMO selection maximizes.
    """

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep_variable: SweepVariable = SweepVariable.BS_DISTANCE
    sweep_values: tuple[float, ...] = DEFAULT_DISTANCES
    trials: int = DEFAULT_TRIALS
    schemes: frozenset[SchemeKind] = frozenset({SchemeKind.DMIMO_CJT, SchemeKind.BASELINE})
    selection_methods: frozenset[Method] = frozenset({Method.EXHAUSTIVE})
    objective: Objective = Objective.HARMONIC
    phase1_maxmin: bool = False
    solver: MaxMinSolverConfig = field(default_factory=MaxMinSolverConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "sweep_variable", SweepVariable(self.sweep_variable))
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        object.__setattr__(self, "schemes", frozenset(SchemeKind(s) for s in self.schemes))
        object.__setattr__(self, "selection_methods", frozenset(Method(m) for m in self.selection_methods))
        object.__setattr__(self, "objective", Objective(self.objective))
        if int(self.trials) < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.sweep_values:
            raise ValueError("sweep_values must be non-empty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep_values must be sorted ascending")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        dmimo = {SchemeKind.DMIMO_CJT, SchemeKind.DMIMO_NCJT}
        if self.schemes & dmimo and not self.selection_methods:
            raise ValueError("D-MIMO schemes need at least one selection method")
        for value in self.sweep_values:
            # raises on invalid geometry before any trial runs
            cfg = apply_sweep(self.scenario, self.sweep_variable, value)
            if SchemeKind.PHASE1_ONLY in self.schemes and cfg.num_collaborators < 1:
                raise ValueError(f"Phase1Only needs at least one collaborator (sweep value {value})")

    def replace(self, **changes: Any) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        if "scenario" in data:
            data["scenario"] = ScenarioConfig.from_dict(data["scenario"] or {})
        if "solver" in data:
            data["solver"] = MaxMinSolverConfig(**data["solver"])
        return cls(**data)


def load_experiment_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ExperimentSpec.from_dict(data)


@dataclass(frozen=True)
class CapacityReport:
    sweep_variable: SweepVariable
    sweep_value: float
    scheme: str
    power_mode: PowerMode
    mean_rate: float  # bits/s/Hz
    mean_bits: float  # bits/s
    relative_improvement: float
    mean_selected_ues: float
    trials: int
    confidence_halfwidth: float  # bits/s, 95 %, normal approximation
    relative_improvement_halfwidth: float = math.nan


def apply_sweep(cfg: ScenarioConfig, variable: SweepVariable, value: float) -> ScenarioConfig:
    variable = SweepVariable(variable)
    if variable is SweepVariable.BS_DISTANCE:
        return cfg.replace(bs_distance=float(value))
    if variable is SweepVariable.MDAA_RADIUS:
        return cfg.replace(mdaa_radius=float(value))
    if value < 1 or value != int(value):
        raise ValueError(f"NumUes sweep values must be integers >= 1, got {value}")
    return cfg.replace(num_collaborators=int(value) - 1)


@dataclass(frozen=True)
class TrialDraw:
    """Every random quantity of one trial; schemes are evaluated on the same draw."""

    placement: Placement
    phase1_budgets: list[LinkBudget]
    phase1_channels: np.ndarray  # (n, N_r^UE, N_t^UE)
    phase2_budgets: list[LinkBudget]  # serving UE first, full per-UE power
    phase2_channels: np.ndarray  # (n + 1, N_r^BS, N_t^UE)

    def cjt_evaluator(self, cfg: ScenarioConfig) -> CjtSubsetEvaluator:
        return CjtSubsetEvaluator(
            self.phase2_budgets[0], self.phase2_channels[0],
            self.phase2_budgets[1:], list(self.phase2_channels[1:]),
            power_mode=cfg.power_mode, per_ue_power_dbm=cfg.phase2_tx_power_per_ue,
            normalize_over=cfg.normalize_over,
        )

    def ncjt_evaluator(self, cfg: ScenarioConfig) -> NcjtSubsetEvaluator:
        return NcjtSubsetEvaluator(
            self.phase2_budgets[0], self.phase2_channels[0],
            self.phase2_budgets[1:], list(self.phase2_channels[1:]),
            power_mode=cfg.power_mode, per_ue_power_dbm=cfg.phase2_tx_power_per_ue,
            normalize_over=cfg.normalize_over,
        )


def trial_seed(master_seed: int, sweep_index: int, trial_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(sweep_index), int(trial_index)))


def draw_trial(cfg: ScenarioConfig, seed: np.random.SeedSequence) -> TrialDraw:
    """Placement, link budgets and fading for one trial.

    Geometry, fading and propagation extras (LOS coin flips, shadowing) use
    separate child streams, so enabling e.g. shadowing leaves the channels
    of a given seed unchanged.
    """
    geo_rng, fading_rng, prop_rng = (np.random.default_rng(s) for s in seed.spawn(3))
    placement = place_mdaa(cfg, geo_rng)
    n = cfg.num_collaborators

    phase1_budgets = []
    for d in placement.collaborator_distances():
        los = resolve_los(cfg.ue_link_condition, float(d), prop_rng)
        phase1_budgets.append(
            link_budget(
                cfg.phase1_tx_power, float(d), cfg.bandwidth_phase1, cfg.noise_figure_ue, cfg,
                los=los, h_tx=cfg.ue_height, h_rx=cfg.ue_height,
                shadowing_db=shadowing_draw(cfg, los, prop_rng),
            )
        )

    dh = cfg.bs_height - cfg.ue_height
    phase2_budgets = []
    for d2 in placement.bs_distances_2d():
        los = resolve_los(cfg.bs_link_condition, float(d2), prop_rng)
        phase2_budgets.append(
            link_budget(
                cfg.phase2_tx_power_per_ue, math.hypot(d2, dh), cfg.bandwidth_phase2, cfg.noise_figure_bs, cfg,
                los=los, h_tx=cfg.bs_height, h_rx=cfg.ue_height,
                shadowing_db=shadowing_draw(cfg, los, prop_rng),
            )
        )

    h1 = draw_channels(n, cfg.ue_rx_antennas, cfg.ue_tx_antennas, fading_rng)
    h2 = draw_channels(n + 1, cfg.bs_rx_antennas, cfg.ue_tx_antennas, fading_rng)
    return TrialDraw(placement, phase1_budgets, h1, phase2_budgets, h2)


def _dmimo_label(kind: SchemeKind, method: Method) -> str:
    return f"{kind.value}-{method.value}"


def run_trial(spec: ExperimentSpec, cfg: ScenarioConfig, seed: np.random.SeedSequence) -> dict[str, tuple[float, float, float]]:
    """Evaluate every requested scheme on one draw.

    Returns ``label -> (rate bits/s/Hz, bits/s, selected collaborators)``;
    the ``Baseline`` entry is always present.
    """
    draw = draw_trial(cfg, seed)
    n = cfg.num_collaborators
    b1, b2 = cfg.bandwidth_phase1, cfg.bandwidth_phase2
    out: dict[str, tuple[float, float, float]] = {}

    cjt = draw.cjt_evaluator(cfg)
    r_base = cjt(())
    out["Baseline"] = (r_base, b2 * r_base, 0.0)

    need_phase1 = n > 0 and spec.schemes & {SchemeKind.PHASE1_ONLY, SchemeKind.DMIMO_CJT, SchemeKind.DMIMO_NCJT}
    rates1 = np.zeros(0)
    if need_phase1:
        p1 = phase1_rate_identity(draw.phase1_budgets, list(draw.phase1_channels))
        rates1 = p1.per_ue_rates

    if SchemeKind.PHASE1_ONLY in spec.schemes:
        if n == 0:
            raise ValueError("Phase1Only needs at least one collaborator")
        for label, r in (("Phase1Min", p1.min_rate), ("Phase1Median", p1.median_rate), ("Phase1Max", p1.max_rate)):
            out[label] = (r, b1 * r, float(n))
        if spec.phase1_maxmin:
            _, mm = phase1_maxmin_precoder(draw.phase1_budgets, list(draw.phase1_channels), spec.solver)
            out["Phase1MaxMin"] = (mm.min_rate, b1 * mm.min_rate, float(n))

    everyone = tuple(range(n))
    if SchemeKind.PHASE2_CJT in spec.schemes:
        r = cjt(everyone)
        out["Phase2CJT"] = (r, b2 * r, float(n))
    ncjt = None
    if spec.schemes & {SchemeKind.PHASE2_NCJT, SchemeKind.DMIMO_NCJT}:
        ncjt = draw.ncjt_evaluator(cfg)
    if SchemeKind.PHASE2_NCJT in spec.schemes:
        r = ncjt(everyone)
        out["Phase2NCJT"] = (r, b2 * r, float(n))

    for kind, evaluator in ((SchemeKind.DMIMO_CJT, cjt), (SchemeKind.DMIMO_NCJT, ncjt)):
        if kind not in spec.schemes:
            continue
        for method in METHOD_ORDER:
            if method not in spec.selection_methods:
                continue
            res = SELECTORS[method](rates1, evaluator, b1, b2, spec.objective)
            bits = res.throughput.bits_delivered
            out[_dmimo_label(kind, method)] = (bits / b2, bits, float(len(res.chosen_set)))
    return out


def scheme_labels(spec: ExperimentSpec) -> list[str]:
    """Report rows per sweep point, in output order."""
    labels = []
    for kind in SCHEME_ORDER:
        if kind not in spec.schemes:
            continue
        if kind is SchemeKind.PHASE1_ONLY:
            labels += ["Phase1Min", "Phase1Median", "Phase1Max"]
            if spec.phase1_maxmin:
                labels.append("Phase1MaxMin")
        elif kind in (SchemeKind.DMIMO_CJT, SchemeKind.DMIMO_NCJT):
            labels += [_dmimo_label(kind, m) for m in METHOD_ORDER if m in spec.selection_methods]
        else:
            labels.append(kind.value)
    return labels


def _run_point(args) -> list[dict[str, tuple[float, float, float]]]:
    spec, sweep_index, trial_indices = args
    cfg = apply_sweep(spec.scenario, spec.sweep_variable, spec.sweep_values[sweep_index])
    return [run_trial(spec, cfg, trial_seed(cfg.rng_seed, sweep_index, t)) for t in trial_indices]


def run_trials(spec: ExperimentSpec, jobs: int = 1) -> list[list[dict[str, tuple[float, float, float]]]]:
    """Raw per-trial results, indexed ``[sweep_index][trial_index]``.

    Trial seeds depend only on (master seed, sweep index, trial index), so
    ``jobs > 1`` (process pool) gives the same numbers as a serial run.
    """
    tasks = []
    chunk = max(1, spec.trials // max(1, 4 * jobs)) if jobs > 1 else spec.trials
    for si in range(len(spec.sweep_values)):
        for start in range(0, spec.trials, chunk):
            tasks.append((spec, si, range(start, min(start + chunk, spec.trials))))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_point, tasks))
    else:
        chunks = [_run_point(t) for t in tasks]
    results: list[list[dict]] = [[] for _ in spec.sweep_values]
    for (_, si, _), part in zip(tasks, chunks):
        results[si].extend(part)
    return results


def _halfwidth(x: np.ndarray) -> float:
    if x.size < 2:
        return 0.0
    return float(Z95 * np.std(x, ddof=1) / math.sqrt(x.size))


def aggregate(spec: ExperimentSpec, results: Sequence[Sequence[Mapping[str, tuple[float, float, float]]]]) -> list[CapacityReport]:
    """Average per-trial results into one report per (sweep value, scheme).

    Relative improvement is the ratio of mean bits to mean baseline bits;
    its half-width uses the delta method on the paired samples.
    """
    labels = scheme_labels(spec)
    reports = []
    for si, trials in enumerate(results):
        cfg = apply_sweep(spec.scenario, spec.sweep_variable, spec.sweep_values[si])
        base = np.array([t["Baseline"][1] for t in trials])
        base_mean = float(np.sum(base) / base.size)
        for label in labels:
            arr = np.array([t[label] for t in trials], dtype=float)
            rate, bits, sel = arr[:, 0], arr[:, 1], arr[:, 2]
            mean_bits = float(np.sum(bits) / bits.size)
            rel = mean_bits / base_mean if base_mean > 0 else math.nan
            rel_hw = _halfwidth(bits - rel * base) / base_mean if base_mean > 0 else math.nan
            reports.append(
                CapacityReport(
                    sweep_variable=spec.sweep_variable,
                    sweep_value=spec.sweep_values[si],
                    scheme=label,
                    power_mode=cfg.power_mode,
                    mean_rate=float(np.sum(rate) / rate.size),
                    mean_bits=mean_bits,
                    relative_improvement=rel,
                    mean_selected_ues=float(np.sum(sel) / sel.size),
                    trials=len(trials),
                    confidence_halfwidth=_halfwidth(bits),
                    relative_improvement_halfwidth=rel_hw,
                )
            )
    return reports


def run_experiment(spec: ExperimentSpec, jobs: int = 1) -> list[CapacityReport]:
    """Run every trial of ``spec`` and return the averaged reports."""
    log.info(
        "running %s sweep over %d points x %d trials",
        spec.sweep_variable.value, len(spec.sweep_values), spec.trials,
    )
    return aggregate(spec, run_trials(spec, jobs=jobs))


def _fmt(value: Any) -> str:
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(reports: Iterable[CapacityReport], path: str | Path) -> None:
    """Write reports as CSV (header plus one row per report, in the given order)."""
    rows = [
        (r.sweep_variable, r.sweep_value, r.scheme, r.power_mode, r.mean_rate, r.mean_bits,
         r.relative_improvement, r.mean_selected_ues, r.trials, r.confidence_halfwidth)
        for r in reports
    ]
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# figure presets

FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")

_SCENARIO_KEYS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def _split_overrides(overrides: Mapping[str, Any]) -> tuple[dict, dict]:
    overrides = dict(overrides or {})
    if "seed" in overrides:
        overrides["rng_seed"] = overrides.pop("seed")
    if "los" in overrides:
        overrides["bs_link_condition"] = overrides.pop("los")
    scen = {k: overrides.pop(k) for k in list(overrides) if k in _SCENARIO_KEYS and overrides[k] is not None}
    spec = {k: v for k, v in overrides.items() if v is not None}
    unknown = set(spec) - {f.name for f in dataclasses.fields(ExperimentSpec)}
    if unknown:
        raise ValueError(f"unknown overrides: {sorted(unknown)}")
    return scen, spec


def figure_specs(figure_id: str, overrides: Mapping[str, Any] | None = None) -> list[tuple[ExperimentSpec, dict[str, str]]]:
    """Experiment specs behind one figure, each with a scheme relabeling map."""
    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure {figure_id!r}; expected one of {', '.join(FIGURES)}")
    scen_over, spec_over = _split_overrides(overrides or {})
    forced_mode = scen_over.pop("power_mode", None)

    def make(mode, **kw) -> ExperimentSpec:
        scenario = ScenarioConfig(power_mode=forced_mode or mode, **{**kw.pop("scenario", {}), **scen_over})
        return ExperimentSpec(scenario=scenario, **{**kw, **spec_over})

    full, norm = PowerMode.FULL, PowerMode.NORMALIZED
    if figure_id == "fig3":
        return [(make(full, sweep_variable=SweepVariable.MDAA_RADIUS, sweep_values=DEFAULT_RADII,
                      schemes={SchemeKind.PHASE1_ONLY}, phase1_maxmin=True), {})]
    if figure_id in ("fig4", "fig5"):
        mode = full if figure_id == "fig4" else norm
        out = []
        for u in range(1, 11):
            schemes = {SchemeKind.PHASE2_CJT} | ({SchemeKind.BASELINE} if u == 1 else set())
            spec = make(mode, scenario={"num_collaborators": u - 1, "mdaa_radius": 50.0},
                        sweep_variable=SweepVariable.BS_DISTANCE, sweep_values=DEFAULT_DISTANCES, schemes=schemes)
            out.append((spec, {"Phase2CJT": f"Phase2CJT_U{u}"}))
        return out
    if figure_id in ("fig6", "fig7"):
        mode = full if figure_id == "fig6" else norm
        return [(make(mode, scenario={"mdaa_radius": 50.0}, sweep_variable=SweepVariable.BS_DISTANCE,
                      sweep_values=DEFAULT_DISTANCES, schemes={SchemeKind.DMIMO_CJT, SchemeKind.BASELINE},
                      selection_methods={Method.EXHAUSTIVE}), {})]
    if figure_id == "fig8":
        return [(make(full, scenario={"mdaa_radius": 200.0}, sweep_variable=SweepVariable.BS_DISTANCE,
                      sweep_values=DEFAULT_DISTANCES, schemes={SchemeKind.DMIMO_CJT, SchemeKind.BASELINE},
                      selection_methods={Method.GREEDY, Method.ALL, Method.EXHAUSTIVE}), {})]
    # fig9: NCJT D-MIMO under both power modes
    modes = [forced_mode] if forced_mode else [full, norm]
    return [
        (make(mode, scenario={"mdaa_radius": 50.0}, sweep_variable=SweepVariable.BS_DISTANCE,
              sweep_values=DEFAULT_DISTANCES, schemes={SchemeKind.DMIMO_NCJT, SchemeKind.BASELINE},
              selection_methods={Method.EXHAUSTIVE}), {})
        for mode in modes
    ]


def reproduce_figure(
    figure_id: str,
    overrides: Mapping[str, Any] | None = None,
    output: str | Path | None = None,
    jobs: int = 1,
) -> list[CapacityReport]:
    """Run the preset experiments for ``figure_id`` and optionally write the CSV.

    ``overrides`` may hold ScenarioConfig fields (plus the aliases ``seed``
    and ``los``) or ExperimentSpec fields such as ``trials``.
    """
    reports: list[CapacityReport] = []
    for spec, relabel in figure_specs(figure_id, overrides):
        for r in run_experiment(spec, jobs=jobs):
            reports.append(dataclasses.replace(r, scheme=relabel.get(r.scheme, r.scheme)))
    if output is not None:
        emit_csv(reports, output)
    return reports
