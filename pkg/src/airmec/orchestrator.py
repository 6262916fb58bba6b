"""Outer alternating-optimization loop and comparison schemes.

One ``optimize`` call is a single deterministic flow; concurrent calls
share no state.  The trace records the true evaluated objective after
every block so monotonicity is observable at each step boundary.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .config import SystemConfig
from .convexcore import STATUS_INFEASIBLE, STATUS_OPTIMAL
from .sysmodel import (ChannelSet, Decision, DtState, IrsConfig, RateReport,
                       evaluate, evaluate_no_dt)
from . import subproblems as sub
from .subproblems import (QuantizationSpec, WorkingPoint, quantize_phases,
                          restore_feasibility, score_point, solve_block1,
                          solve_time, solve_v1, solve_v2)

log = logging.getLogger(__name__)

BASELINE_KINDS = ("random_phase", "no_irs", "offloading_only", "single_tier",
                  "no_dt", "quantized")


@dataclass(frozen=True)
class AlgoParams:
    """Convergence control for the outer loop; inner knobs mirror the
    subproblem defaults."""

    epsilon: float = 1e-3
    max_outer: int = 30
    delta_strict: float = sub.DELTA_STRICT
    inner_max: int = sub.INNER_MAX
    inner_tol: float = sub.INNER_TOL
    v2_sweep_tol: float = sub.V2_SWEEP_TOL
    feas_max_alternations: int = sub.FEAS_MAX_ALTERNATIONS

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class OuterRecord:
    iteration: int
    objective: float                      # bits, after the full pass
    block_objectives: dict[str, float]    # true objective after each block
    activeness: dict[str, float]          # relative slack residuals
    causality_slack: float
    wall_time: float


@dataclass
class SolveTrace:
    records: list[OuterRecord] = field(default_factory=list)
    feasible: bool = True
    converged: bool = False
    iterations: int = 0
    wall_time: float = 0.0
    messages: list[str] = field(default_factory=list)

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]


class OptimizeResult(NamedTuple):
    decision: Decision
    irs: IrsConfig
    report: RateReport
    trace: SolveTrace


class BaselineResult(NamedTuple):
    decision: Decision
    report: RateReport
    irs: IrsConfig
    trace: SolveTrace


@dataclass(frozen=True)
class _Mode:
    optimize_irs: bool = True
    single_tier: bool = False
    offloading_only: bool = False


def _init_phases(config: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(101,))
    rng = np.random.default_rng(ss)
    v1 = np.exp(1j * rng.uniform(0, 2 * np.pi, config.N))
    v2 = np.exp(1j * rng.uniform(0, 2 * np.pi, config.N))
    return v1, v2


def _backtrack_power(config: SystemConfig, comps_n, m: np.ndarray,
                     delta: float) -> np.ndarray:
    """Largest uniform transmit power (halved for margin) that keeps the
    monitoring floor satisfiable; returns reciprocal powers."""
    if config.K_o == 0:
        return np.zeros(0)
    p_ref = 0.5 * config.P_o

    def ok(beta: float) -> bool:
        t = np.full(config.K_o, 1.0 / max(beta * p_ref, 1e-300))
        return sub.monitoring_margin_ok(config.P_a, comps_n, m, t, delta)

    if ok(1.0):
        return np.full(config.K_o, 1.0 / p_ref)
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = (lo + hi) / 2
        if mid <= 0 or ok(mid):
            lo = mid
        else:
            hi = mid
    beta = max(lo / 2, 1.0 / sub._T_MAX_FACTOR)
    return np.full(config.K_o, 1.0 / (beta * p_ref))


def _initial_point(config: SystemConfig, channels: ChannelSet, dt: DtState,
                   params: AlgoParams, mode: _Mode
                   ) -> tuple[WorkingPoint | None, SolveTrace]:
    trace = SolveTrace()
    v1, v2 = _init_phases(config)
    comps_n = sub._normalized_composites(config, channels, v1, v2)
    m = np.sum(comps_n.h_a, axis=0)
    norm = np.linalg.norm(m)
    m = m / norm if norm > 0 else np.ones(config.M1) / np.sqrt(config.M1)
    t = np.full(config.K_o, 1.0 / (0.5 * config.P_o))

    if not sub.monitoring_margin_ok(config.P_a, comps_n, m, t,
                                    params.delta_strict):
        fs = restore_feasibility(
            config, channels, m, t, v1, delta_strict=params.delta_strict,
            max_alternations=params.feas_max_alternations)
        if not fs.satisfied:
            trace.feasible = False
            trace.messages.append("monitoring-rate floor unattainable")
            return None, trace
        m, v1 = fs.m, fs.v1
        comps_n = sub._normalized_composites(config, channels, v1, v2)
        t = _backtrack_power(config, comps_n, m, params.delta_strict)

    p = 1.0 / t if t.size else t
    if mode.offloading_only:
        f_lo1 = dt.f_hat_lo.copy()
        f_lo2 = dt.f_hat_lo.copy()
        f_es = dt.f_hat_es
    else:
        head1 = np.maximum(config.P_o - p, 0.0) if t.size else np.zeros(0)
        f_lo1 = dt.f_hat_lo + np.minimum(config.F_lo_max,
                                         (head1 / config.kappa) ** (1 / 3))
        f_lo2 = dt.f_hat_lo + np.minimum(config.F_lo_max,
                                         (config.P_o / config.kappa) ** (1 / 3))
        f_es = dt.f_hat_es + min(config.F_es_max,
                                 (config.P_es / 2 / config.kappa) ** (1 / 3))
    if mode.single_tier:
        W = np.zeros((config.M1, config.M1), dtype=complex)
        f_es = dt.f_hat_es + min(config.F_es_max,
                                 (config.P_es / config.kappa) ** (1 / 3)) \
            if not mode.offloading_only else dt.f_hat_es
    else:
        W = (config.P_es / 2 / config.M1) * np.eye(config.M1, dtype=complex)

    point = WorkingPoint(m=m, t=t, W=W, f_lo1=f_lo1, f_lo2=f_lo2, f_es=f_es,
                         v1=v1, v2=v2, T1=config.T / 2, T2=config.T / 2)
    point = _retime(config, channels, dt, point)
    return point, trace


def _retime(config: SystemConfig, channels: ChannelSet, dt: DtState,
            point: WorkingPoint) -> WorkingPoint:
    rep = score_point(config, channels, dt, point)
    air_b = config.B if config.aircomp_bandwidth else 1.0
    stage1 = config.w_a * air_b * rep.R_a + config.w_o * (
        config.B * rep.sum_r_e + float(np.sum(rep.R_lo1)))
    stage2 = config.w_o * float(np.sum(rep.R_lo2))
    T1, T2 = solve_time(stage1, stage2, config.B * rep.sum_r_e,
                        config.B * rep.r_c + rep.R_es, config.T)
    return replace(point, T1=T1, T2=T2)


def _activeness(config: SystemConfig, channels: ChannelSet,
                result) -> dict[str, float]:
    if result.solver_slacks is None or result.slacks is None:
        return {}
    sv, tr = result.solver_slacks, result.slacks
    out = {"signal_slack": abs(sv.s_a - tr.s_a) / tr.s_a,
           "interference_slack": abs(sv.i_a - tr.i_a) / tr.i_a}
    if config.K_o > 0:
        out["offload_snr_slack"] = abs(sv.s_o - tr.s_o) / tr.s_o
    return out


def _infeasible_result(config: SystemConfig, channels: ChannelSet,
                       dt: DtState, trace: SolveTrace) -> OptimizeResult:
    v1, v2 = _init_phases(config)
    irs = IrsConfig(v1, v2)
    decision = Decision.zero(config)
    report = evaluate(config, channels, irs, dt, decision)
    trace.feasible = False
    return OptimizeResult(decision, irs, report, trace)


def optimize(config: SystemConfig, channels: ChannelSet, dt: DtState,
             params: AlgoParams = AlgoParams()) -> OptimizeResult:
    """Alternating optimization over all variable blocks until the
    fractional objective increase drops below ``params.epsilon``."""
    return _optimize(config, channels, dt, params, _Mode())


def _optimize(config: SystemConfig, channels: ChannelSet, dt: DtState,
              params: AlgoParams, mode: _Mode) -> OptimizeResult:
    t_start = time.perf_counter()
    point, trace = _initial_point(config, channels, dt, params, mode)
    if point is None:
        return _infeasible_result(config, channels, dt, trace)

    prev_obj = score_point(config, channels, dt, point).R_total
    skipped_iters = 0
    for it in range(1, params.max_outer + 1):
        t_iter = time.perf_counter()
        blocks: dict[str, float] = {}
        activeness: dict[str, float] = {}
        failed = 0

        br = solve_block1(config, channels, dt, point,
                          single_tier=mode.single_tier,
                          offloading_only=mode.offloading_only,
                          inner_max=params.inner_max,
                          inner_tol=params.inner_tol,
                          delta_strict=params.delta_strict)
        if br.status == STATUS_INFEASIBLE:
            fs = restore_feasibility(
                config, channels, point.m, point.t, point.v1,
                delta_strict=params.delta_strict,
                max_alternations=params.feas_max_alternations)
            if fs.satisfied:
                comps_n = sub._normalized_composites(config, channels, fs.v1,
                                                     point.v2)
                t_new = _backtrack_power(config, comps_n, fs.m,
                                         params.delta_strict)
                point = replace(point, m=fs.m, v1=fs.v1,
                                t=t_new if config.K_o else point.t)
                point = _retime(config, channels, dt, point)
                br = solve_block1(config, channels, dt, point,
                                  single_tier=mode.single_tier,
                                  offloading_only=mode.offloading_only,
                                  inner_max=params.inner_max,
                                  inner_tol=params.inner_tol,
                                  delta_strict=params.delta_strict)
        if br.status == STATUS_OPTIMAL:
            point = br.point
            activeness = _activeness(config, channels, br)
        else:
            failed += 1
            trace.messages.append(f"iteration {it}: transceiver block "
                                  f"{br.status}, skipped")
        blocks["transceiver"] = score_point(config, channels, dt,
                                            point).R_total

        if mode.optimize_irs and not mode.single_tier:
            v2_new = solve_v2(channels, config.sigma_c2, point.W, point.v2,
                              sweep_tol=params.v2_sweep_tol)
            point = replace(point, v2=v2_new)
        blocks["phase_hop2"] = score_point(config, channels, dt,
                                           point).R_total

        if mode.optimize_irs:
            v1_new, _ = solve_v1(config, channels, dt, point,
                                 inner_max=params.inner_max,
                                 inner_tol=params.inner_tol,
                                 delta_strict=params.delta_strict)
            point = replace(point, v1=v1_new)
        blocks["phase_hop1"] = score_point(config, channels, dt,
                                           point).R_total

        point = _retime(config, channels, dt, point)
        rep = score_point(config, channels, dt, point)
        blocks["time"] = rep.R_total

        trace.records.append(OuterRecord(
            iteration=it, objective=rep.R_total, block_objectives=blocks,
            activeness=activeness, causality_slack=rep.causality_slack,
            wall_time=time.perf_counter() - t_iter))
        trace.iterations = it

        if failed:
            skipped_iters += 1
            if skipped_iters >= 2:
                trace.messages.append("two consecutive skipped iterations")
                break
        else:
            skipped_iters = 0

        if prev_obj > 0 and (rep.R_total - prev_obj) / prev_obj < params.epsilon:
            trace.converged = True
            prev_obj = rep.R_total
            break
        prev_obj = rep.R_total

    trace.wall_time = time.perf_counter() - t_start
    decision = point.decision(config, channels)
    irs = IrsConfig(point.v1, point.v2)
    report = evaluate(config, channels, irs, dt, decision)
    return OptimizeResult(decision, irs, report, trace)


# ---------------------------------------------------------------------------
# comparison schemes
# ---------------------------------------------------------------------------

def run_baseline(kind: str, config: SystemConfig, channels: ChannelSet,
                 dt: DtState, params: AlgoParams = AlgoParams(),
                 l_bits: int | None = None) -> BaselineResult:
    """Comparison schemes sharing the proposed algorithm's machinery."""
    if kind == "random_phase":
        res = _optimize(config, channels, dt, params,
                        _Mode(optimize_irs=False))
        return BaselineResult(res.decision, res.report, res.irs, res.trace)
    if kind == "no_irs":
        res = _optimize(config, channels.without_reflection(), dt, params,
                        _Mode(optimize_irs=False))
        return BaselineResult(res.decision, res.report, res.irs, res.trace)
    if kind == "offloading_only":
        res = _optimize(config, channels, dt, params,
                        _Mode(offloading_only=True))
        return BaselineResult(res.decision, res.report, res.irs, res.trace)
    if kind == "single_tier":
        res = _optimize(config, channels, dt, params, _Mode(single_tier=True))
        return BaselineResult(res.decision, res.report, res.irs, res.trace)
    if kind == "no_dt":
        res = optimize(config, channels, DtState.zero(config.K_o), params)
        report = evaluate_no_dt(config, channels, res.irs, dt, res.decision)
        return BaselineResult(res.decision, report, res.irs, res.trace)
    if kind == "quantized":
        res = optimize(config, channels, dt, params)
        if not res.trace.feasible:
            return BaselineResult(res.decision, res.report, res.irs,
                                  res.trace)
        bits = l_bits if l_bits is not None else (config.l_bits or 3)
        spec = QuantizationSpec(bits)
        point = WorkingPoint(
            m=res.decision.m, t=res.decision.t, W=res.decision.W,
            f_lo1=res.decision.f_lo1, f_lo2=res.decision.f_lo2,
            f_es=res.decision.f_es,
            v1=quantize_phases(res.irs.v1, spec),
            v2=quantize_phases(res.irs.v2, spec),
            T1=res.decision.T1, T2=res.decision.T2)
        point = _retime(config, channels, dt, point)
        decision = point.decision(config, channels)
        irs = IrsConfig(point.v1, point.v2)
        report = evaluate(config, channels, irs, dt, decision)
        return BaselineResult(decision, report, irs, res.trace)
    raise ValueError(f"unknown baseline kind {kind!r}")
