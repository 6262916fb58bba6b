"""Block subproblems of the alternating optimization.

Each solver works on noise-normalized channels (entries divided by the
receiver noise standard deviation), CPU frequencies in units of their
caps, and rates in Mbit/s; decision variables are additionally rescaled
by their anchor magnitudes so the conic solver sees O(1) data.  Results
are converted back to SI units at the boundary.  All solvers are
deterministic given identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import cvxpy as cp
import numpy as np

from .config import SystemConfig
from .convexcore import (ConvexProgram, STATUS_INFEASIBLE, STATUS_OPTIMAL,
                         logdet_rate, quad_over_lin_c)
from .sysmodel import (ChannelSet, Composites, DtState, IrsConfig, Decision,
                       composite_channels, uniform_forcing, evaluate)

LOG2E = np.log2(np.e)
GHZ = 1e9
MBIT = 1e6

# default knobs, mirrored by the orchestrator's parameter set
INNER_MAX = 30
INNER_TOL = 1e-4
DELTA_STRICT = 1e-6
V2_SWEEP_TOL = 1e-6
FEAS_MAX_ALTERNATIONS = 50
_T_MAX_FACTOR = 1e6    # cap on reciprocal powers: p >= P_o / _T_MAX_FACTOR
_PROC_BONUS = 1e-8     # tie-break toward spare processing capability


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlackPoint:
    """Anchor of the slack reformulation: signal, interference and SNR
    slacks plus reciprocal transmit powers."""

    s_a: float
    i_a: float
    s_o: float
    t: np.ndarray

    def __post_init__(self) -> None:
        if min(self.s_a, self.i_a, self.s_o) <= 0 or np.any(self.t <= 0):
            raise ValueError("slack anchors must be strictly positive")


@dataclass(frozen=True)
class ElementUpdate:
    """Per-element data of the second-hop phase subproblem."""

    A: np.ndarray
    B: np.ndarray
    index: int

    def __post_init__(self) -> None:
        scale = max(float(np.max(np.abs(self.A))), 1e-300)
        if np.max(np.abs(self.A - self.A.conj().T)) > 1e-9 * scale:
            raise ValueError("A must be Hermitian")

    def rate(self, v: complex) -> float:
        M = self.A + v * self.B + np.conj(v) * self.B.conj().T
        sign, logdet = np.linalg.slogdet(M)
        if sign <= 0:
            return -np.inf
        return float(logdet / np.log(2))


@dataclass(frozen=True)
class FeasibilityState:
    """Outcome of feasibility restoration for the monitoring-rate floor."""

    gamma: float
    m: np.ndarray
    t: np.ndarray
    v1: np.ndarray
    satisfied: bool

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass(frozen=True)
class QuantizationSpec:
    """Uniform phase grid with 2^l points over [0, 2*pi)."""

    l: int

    def __post_init__(self) -> None:
        if self.l < 1:
            raise ValueError("bit count must be >= 1")

    @property
    def grid(self) -> np.ndarray:
        step = 2 * np.pi / 2 ** self.l
        return step * np.arange(2 ** self.l)


@dataclass(frozen=True)
class WorkingPoint:
    """Full set of optimization variables carried between blocks (SI units)."""

    m: np.ndarray
    t: np.ndarray
    W: np.ndarray
    f_lo1: np.ndarray
    f_lo2: np.ndarray
    f_es: float
    v1: np.ndarray
    v2: np.ndarray
    T1: float
    T2: float

    @property
    def p(self) -> np.ndarray:
        return 1.0 / self.t if self.t.size else self.t

    def decision(self, config: SystemConfig, channels: ChannelSet) -> Decision:
        comps = composite_channels(channels, IrsConfig(self.v1, self.v2))
        eta, b, _ = uniform_forcing(comps, self.m, config.P_a, self.p,
                                    config.sigma_e2)
        return Decision(m=self.m, eta=eta, b=b, p=self.p, W=self.W,
                        f_lo1=self.f_lo1, f_lo2=self.f_lo2, f_es=self.f_es,
                        T1=self.T1, T2=self.T2)


def score_point(config: SystemConfig, channels: ChannelSet, dt: DtState,
                point: WorkingPoint):
    """True rate report of a working point (transceiver scalars refit)."""
    irs = IrsConfig(point.v1, point.v2)
    return evaluate(config, channels, irs, dt, point.decision(config, channels))


# ---------------------------------------------------------------------------
# surrogate functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RaLowSurrogate:
    """Affine lower bound of log2(P_a / (s_a * i_a)), tight at the anchor."""

    const: float
    grad_s: float
    grad_i: float
    anchor_s: float
    anchor_i: float

    def __call__(self, s_a, i_a):
        return (self.const - self.grad_s * (s_a - self.anchor_s)
                - self.grad_i * (i_a - self.anchor_i))


def surrogate_ra_low(P_a: float, anchor_s: float, anchor_i: float
                     ) -> RaLowSurrogate:
    if anchor_s <= 0 or anchor_i <= 0 or P_a <= 0:
        raise ValueError("anchors and budget must be positive")
    return RaLowSurrogate(const=math.log2(P_a / (anchor_s * anchor_i)),
                          grad_s=LOG2E / anchor_s, grad_i=LOG2E / anchor_i,
                          anchor_s=anchor_s, anchor_i=anchor_i)


@dataclass(frozen=True)
class RoLowSurrogate:
    """Affine lower bound of log2(1 + 1/s_o), tight at the anchor."""

    const: float
    grad: float
    anchor: float

    def __call__(self, s_o):
        return self.const - self.grad * (s_o - self.anchor)


def surrogate_ro_low(anchor_s: float) -> RoLowSurrogate:
    if anchor_s <= 0:
        raise ValueError("anchor must be positive")
    return RoLowSurrogate(const=math.log2(1 + 1 / anchor_s),
                          grad=LOG2E / (anchor_s * (1 + anchor_s)),
                          anchor=anchor_s)


@dataclass(frozen=True)
class QuadLowSurrogate:
    """Affine global lower bound of x^H M x around an anchor (M PSD)."""

    const: float
    w: np.ndarray

    def __call__(self, x):
        return self.const + 2 * np.real(np.vdot(self.w, x))


def surrogate_quad_low(anchor: np.ndarray, gram: np.ndarray) -> QuadLowSurrogate:
    scale = max(float(np.max(np.abs(gram))), 1e-300)
    if np.max(np.abs(gram - gram.conj().T)) > 1e-9 * scale:
        raise ValueError("gram matrix must be Hermitian")
    w = gram @ anchor
    return QuadLowSurrogate(const=-float(np.real(np.vdot(anchor, w))), w=w)


def log2_1p_upper(anchor_x: float) -> tuple[float, float]:
    """Tangent upper bound log2(1+x) <= const + slope*x, tight at anchor."""
    if anchor_x < 0:
        raise ValueError("anchor must be nonnegative")
    slope = LOG2E / (1 + anchor_x)
    return math.log2(1 + anchor_x) - slope * anchor_x, slope


# ---------------------------------------------------------------------------
# normalization helpers
# ---------------------------------------------------------------------------

def _normalized_composites(config: SystemConfig, channels: ChannelSet,
                           v1: np.ndarray, v2: np.ndarray) -> Composites:
    comps = composite_channels(channels, IrsConfig(v1, v2))
    se = math.sqrt(config.sigma_e2)
    sc = math.sqrt(config.sigma_c2)
    return Composites(comps.h_a / se, comps.h_o / se, comps.H_c / sc)


def _monitor_ratio(P_a: float, comps_n: Composites, m: np.ndarray,
                   t: np.ndarray) -> tuple[float, float]:
    """(signal, interference-plus-noise) of the monitoring link, normalized."""
    gains = np.abs(comps_n.h_a.conj() @ m) ** 2
    sig = P_a * float(np.min(gains))
    intf = float(np.sum(np.abs(comps_n.h_o.conj() @ m) ** 2 / t)) if t.size else 0.0
    return sig, intf + float(np.linalg.norm(m) ** 2)


def monitoring_margin_ok(P_a: float, comps_n: Composites, m: np.ndarray,
                         t: np.ndarray, delta: float) -> bool:
    sig, denom = _monitor_ratio(P_a, comps_n, m, t)
    return sig >= denom * 2.0 ** delta


def _lifted_first_hop(config: SystemConfig, channels: ChannelSet):
    """Per-UE matrices mapping the lifted phase vector to the effective
    channel, noise normalized: h_eff = T @ [v1; 1]."""
    se = math.sqrt(config.sigma_e2)
    Ge_H = channels.G_e.conj().T / se
    T_a = [np.concatenate([Ge_H * channels.f_a[k][None, :],
                           channels.h_a[k][:, None] / se], axis=1)
           for k in range(config.K_a)]
    T_o = [np.concatenate([Ge_H * channels.f_o[k][None, :],
                           channels.h_o[k][:, None] / se], axis=1)
           for k in range(config.K_o)]
    return T_a, T_o


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh((Q + Q.conj().T) / 2)
    lam = np.maximum(lam, 0.0)
    return (U * np.sqrt(lam)) @ U.conj().T


def _anchor_slacks(config: SystemConfig, comps_n: Composites, m: np.ndarray,
                   t: np.ndarray) -> tuple[float, float, float, float]:
    gains = np.abs(comps_n.h_a.conj() @ m) ** 2
    s_a = 1.0 / max(float(np.min(gains)), 1e-300)
    if t.size:
        i_a = float(np.sum(np.abs(comps_n.h_o.conj() @ m) ** 2 / t))
        x = float(np.sum(np.linalg.norm(comps_n.h_o, axis=1) ** 2 / t))
    else:
        i_a, x = 0.0, 0.0
    i_a += float(np.linalg.norm(m) ** 2)
    return s_a, i_a, max(x, 1e-300), x


# ---------------------------------------------------------------------------
# block 1: transceiver, power, covariance and CPU allocation
# ---------------------------------------------------------------------------

@dataclass
class BlockResult:
    point: WorkingPoint
    slacks: SlackPoint | None
    status: str
    iterations: int
    objective: float
    solver_slacks: SlackPoint | None = None


def solve_block1(config: SystemConfig, channels: ChannelSet, dt: DtState,
                 point: WorkingPoint, *, single_tier: bool = False,
                 offloading_only: bool = False, inner_max: int = INNER_MAX,
                 inner_tol: float = INNER_TOL,
                 delta_strict: float = DELTA_STRICT) -> BlockResult:
    """Inner SCA loop over the transceiver/power/CPU subproblem.

    The composite channels and stage durations are held fixed; the anchor
    must satisfy the monitoring-rate floor.  Returns the updated point and
    the slack anchors at the solution.
    """
    K_a, K_o, M1 = config.K_a, config.K_o, config.M1
    comps_n = _normalized_composites(config, channels, point.v1, point.v2)
    B_m = config.B / MBIT
    air_b = B_m if config.aircomp_bandwidth else 1.0 / MBIT
    rate_per_cap_lo = config.F_lo_max / config.rho / MBIT   # Mb/s per unit u
    rate_per_cap_es = config.F_es_max / config.rho / MBIT
    pw_lo = config.kappa * config.F_lo_max ** 3             # W at u = 1
    pw_es = config.kappa * config.F_es_max ** 3
    T1, T2 = point.T1, point.T2

    # anchor-derived units keep solver data O(1)
    sa_u, ia_u, so_inv_u, x_u0 = _anchor_slacks(config, comps_n, point.m,
                                                point.t)
    so_u = 1.0 / so_inv_u
    x_u = max(x_u0, 1e-6)
    t_u = point.t.copy() if K_o else np.zeros(0)

    prog = ConvexProgram("block1")
    m = prog.complex("m", M1)
    s_a = prog.real("s_a", pos=True)     # in units of sa_u
    i_a = prog.real("i_a", pos=True)     # in units of ia_u
    q_par = prog.param("q", (K_a, M1), complex=True)
    c0_par = prog.param("c0", K_a)
    prog.add(cp.inv_pos(s_a) <= -c0_par + 2 * cp.real(cp.conj(q_par) @ m))
    ra_c = prog.param("ra_c")
    ra_gs = prog.param("ra_gs", nonneg=True)
    ra_gi = prog.param("ra_gi", nonneg=True)
    prog.add(ra_c - ra_gs * s_a - ra_gi * i_a >= delta_strict)
    obj_const = prog.param("obj_const")
    obj = obj_const - config.w_a * T1 * air_b * (ra_gs * s_a + ra_gi * i_a)

    has_w = not single_tier
    if has_w:
        W = prog.hermitian("W", M1)
        prog.add(W >> 0)
        rc_expr = logdet_rate(comps_n.H_c, W, 1.0)
        es_pwr = cp.real(cp.trace(W))
    else:
        W = None
        rc_expr = 0.0
        es_pwr = 0.0

    u_es = prog.real("u_es", nonneg=True)   # (f_es - deviation) / cap
    prog.add(u_es <= 1.0)
    prog.add(es_pwr + pw_es * cp.power(u_es, 3) <= config.P_es)
    proc_expr = T2 * B_m * rc_expr + T2 * rate_per_cap_es * u_es

    if K_o > 0:
        t = prog.real("t", K_o, pos=True)    # in units of t_u (elementwise)
        s_o = prog.real("s_o", pos=True)     # in units of so_u
        u1 = prog.real("u1", K_o, nonneg=True)
        u2 = prog.real("u2", K_o, nonneg=True)
        go_sc = comps_n.h_o / np.sqrt(ia_u * t_u)[:, None]
        intf = sum(quad_over_lin_c(cp.conj(m) @ go_sc[k], t[k])
                   for k in range(K_o))
        prog.add(i_a >= intf + cp.sum_squares(m) / ia_u)
        so_lin = prog.param("so_lin", K_o, nonpos=True)
        so_const = prog.param("so_const", nonneg=True)
        prog.add(cp.inv_pos(s_o) <= so_const + so_lin @ t)
        c_off = np.linalg.norm(comps_n.h_o, axis=1) ** 2
        x_epi = prog.real("x_epi", nonneg=True)   # in units of x_u
        prog.add(x_epi >= (c_off / (x_u * t_u)) @ cp.inv_pos(t))
        cx_c = prog.param("cx_c")
        cx_s = prog.param("cx_s", nonneg=True)
        prog.add(T1 * B_m * (cx_c + cx_s * x_epi) <= proc_expr)
        prog.add(t <= _T_MAX_FACTOR / (config.P_o * t_u))
        if offloading_only:
            prog.add(u1 == 0, u2 == 0)
            prog.add(cp.inv_pos(t) <= config.P_o * t_u)
        else:
            prog.add(u1 <= 1.0, u2 <= 1.0)
            prog.add(cp.inv_pos(t) + cp.multiply(t_u * pw_lo,
                                                 cp.power(u1, 3))
                     <= config.P_o * t_u)
            prog.add(pw_lo * cp.power(u2, 3) <= config.P_o)
        ro_g = prog.param("ro_g", nonneg=True)
        obj = obj - config.w_o * T1 * B_m * ro_g * s_o
        obj = obj + config.w_o * (T1 * rate_per_cap_lo * cp.sum(u1)
                                  + T2 * rate_per_cap_lo * cp.sum(u2))
    if offloading_only:
        prog.add(u_es == 0)
    prog.maximize(obj + _PROC_BONUS * proc_expr)

    g_a = comps_n.h_a

    def set_anchor(m0, t0):
        sa0, ia0, so0_inv, x0 = _anchor_slacks(config, comps_n, m0, t0)
        so0 = 1.0 / so0_inv if K_o > 0 else 1.0
        ra = surrogate_ra_low(config.P_a, sa0, ia0)
        proj = g_a.conj() @ m0
        values = dict(
            q=sa_u * g_a * proj[:, None],
            c0=sa_u * np.abs(proj) ** 2,
            ra_c=ra.const + ra.grad_s * sa0 + ra.grad_i * ia0,
            ra_gs=ra.grad_s * sa_u, ra_gi=ra.grad_i * ia_u)
        const = config.w_a * T1 * air_b * values["ra_c"]
        if K_o > 0:
            ro = surrogate_ro_low(so0)
            values.update(
                so_lin=-(so_u * c_off * t_u) / t0 ** 2,
                so_const=so_u * float(np.sum(2 * c_off / t0)),
                ro_g=ro.grad * so_u)
            cx_c, cx_s = log2_1p_upper(x0)
            values.update(cx_c=cx_c, cx_s=cx_s * x_u)
            const += config.w_o * T1 * B_m * (ro.const + ro.grad * so0)
        values["obj_const"] = const
        prog.set_params(**values)

    fhat_lo, fhat_es = dt.f_hat_lo, dt.f_hat_es

    def extract_point(values) -> WorkingPoint:
        m_new = values["m"].astype(complex).reshape(M1)
        if K_o > 0:
            t_new = np.maximum(np.asarray(values["t"], dtype=float)
                               .reshape(K_o) * t_u, 1.0 / config.P_o)
            uu1 = np.clip(np.asarray(values["u1"], float).reshape(K_o), 0, 1)
            uu2 = np.clip(np.asarray(values["u2"], float).reshape(K_o), 0, 1)
            f_lo1 = fhat_lo + uu1 * config.F_lo_max
            f_lo2 = fhat_lo + uu2 * config.F_lo_max
        else:
            t_new, f_lo1, f_lo2 = point.t, point.f_lo1, point.f_lo2
        if has_w:
            W_new = np.asarray(values["W"])
            W_new = (W_new + W_new.conj().T) / 2
            lam, U = np.linalg.eigh(W_new)
            W_new = (U * np.maximum(lam, 0.0)) @ U.conj().T
        else:
            W_new = np.zeros((M1, M1), dtype=complex)
        f_es = fhat_es + np.clip(float(values["u_es"]), 0, 1) * config.F_es_max
        return replace(point, m=m_new, t=t_new, W=W_new, f_lo1=f_lo1,
                       f_lo2=f_lo2, f_es=f_es)

    def true_total(pt: WorkingPoint) -> float:
        return score_point(config, channels, dt, pt).R_total

    anchor_total = true_total(point)
    best_point, best_total, best_obj = point, anchor_total, -np.inf
    best_solver_slacks = None
    m0, t0 = point.m.copy(), point.t.copy()
    prev_obj = None
    iterations = 0
    solved = False
    for it in range(inner_max):
        set_anchor(m0, t0)
        res = prog.solve()
        if res.status == STATUS_INFEASIBLE and not solved:
            return BlockResult(point, None, STATUS_INFEASIBLE, it, -np.inf)
        if res.status != STATUS_OPTIMAL:
            break
        solved = True
        iterations = it + 1
        cand = extract_point(res.values)
        m0, t0 = cand.m, cand.t
        cand_total = true_total(cand)
        if cand_total >= best_total:
            best_point, best_total, best_obj = cand, cand_total, res.objective
            best_solver_slacks = SlackPoint(
                max(float(res.values["s_a"]) * sa_u, 1e-300),
                max(float(res.values["i_a"]) * ia_u, 1e-300),
                max(float(res.values["s_o"]) * so_u, 1e-300)
                if K_o > 0 else 1.0,
                cand.t if K_o > 0 else np.ones(1))
        if prev_obj is not None and abs(res.objective - prev_obj) <= \
                inner_tol * max(abs(prev_obj), 1e-9):
            break
        prev_obj = res.objective

    if not solved:
        return BlockResult(point, None, "numerical-failure", iterations,
                           -np.inf)
    sa0, ia0, so0_inv, _ = _anchor_slacks(config, comps_n, best_point.m,
                                          best_point.t)
    slacks = SlackPoint(sa0, ia0,
                        1.0 / so0_inv if K_o > 0 else 1.0,
                        best_point.t if K_o > 0 else np.ones(1))
    return BlockResult(best_point, slacks, STATUS_OPTIMAL, iterations,
                       best_obj, best_solver_slacks)


# ---------------------------------------------------------------------------
# block 2a: second-hop phase sweep
# ---------------------------------------------------------------------------

def element_update(C_bar: np.ndarray, g_bar: np.ndarray, f_prime: np.ndarray,
                   v_n: complex, index: int) -> ElementUpdate:
    """Build the per-element log-det data at the current phase vector.

    ``C_bar`` is the noise-normalized effective second-hop channel after
    absorbing the covariance square root; ``g_bar`` and ``f_prime`` the
    element's reflect/incident factors in the same normalization.
    """
    M2 = C_bar.shape[0]
    D = C_bar - v_n * np.outer(g_bar, f_prime.conj())
    A = np.eye(M2) + D @ D.conj().T + \
        float(np.linalg.norm(f_prime) ** 2) * np.outer(g_bar, g_bar.conj())
    B = np.outer(g_bar, f_prime.conj()) @ D.conj().T
    return ElementUpdate(A=(A + A.conj().T) / 2, B=B, index=index)


def _best_phase(update: ElementUpdate, grid_size: int = 256,
                tol: float = 1e-8) -> float:
    thetas = 2 * np.pi * np.arange(grid_size) / grid_size
    vs = np.exp(1j * thetas)
    stack = (update.A[None, :, :] + vs[:, None, None] * update.B[None, :, :]
             + np.conj(vs)[:, None, None] * update.B.conj().T[None, :, :])
    _, logdets = np.linalg.slogdet(stack)
    k = int(np.argmax(logdets))
    lo = thetas[k] - 2 * np.pi / grid_size
    hi = thetas[k] + 2 * np.pi / grid_size
    invphi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = update.rate(np.exp(1j * c)), update.rate(np.exp(1j * d))
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = update.rate(np.exp(1j * c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = update.rate(np.exp(1j * d))
    return float((a + b) / 2 % (2 * np.pi))


def solve_v2(channels: ChannelSet, sigma_c2: float, W: np.ndarray,
             v2: np.ndarray, *, sweep_tol: float = V2_SWEEP_TOL,
             max_sweeps: int = 30, grid_size: int = 256) -> np.ndarray:
    """Sequential per-element phase updates maximizing the second-hop rate.

    Each element solves a one-dimensional log-det maximization over the
    unit circle; the rate is non-decreasing across updates.
    """
    N = channels.G_e.shape[0]
    lam, U = np.linalg.eigh((W + W.conj().T) / 2)
    lam = np.maximum(lam, 0.0)
    if float(np.sum(lam)) <= 1e-30:
        return v2.copy()
    sqrtW = U * np.sqrt(lam)
    sc = math.sqrt(sigma_c2)
    Hp = channels.H_c @ sqrtW / sc
    Fp = channels.F_c @ sqrtW          # rows are f'_n^H
    g_bars = channels.G_c / sc
    v = v2.astype(complex).copy()
    C = Hp + (g_bars * v) @ Fp

    def rate_of(C_mat):
        M2 = C_mat.shape[0]
        _, logdet = np.linalg.slogdet(np.eye(M2) + C_mat @ C_mat.conj().T)
        return logdet / np.log(2)

    last = rate_of(C)
    for _ in range(max_sweeps):
        for n in range(N):
            g_n = g_bars[:, n]
            f_n = Fp[n, :].conj()
            upd = element_update(C, g_n, f_n, v[n], n)
            if np.max(np.abs(upd.B)) <= 1e-30:
                continue
            theta = _best_phase(upd, grid_size)
            v_new = np.exp(1j * theta)
            if upd.rate(v_new) >= upd.rate(v[n]) - 1e-12:
                C = C + (v_new - v[n]) * np.outer(g_n, f_n.conj())
                v[n] = v_new
        now = rate_of(C)
        if now - last <= sweep_tol * max(abs(last), 1e-12):
            break
        last = now
    return v


# ---------------------------------------------------------------------------
# block 2b: first-hop phase SCA
# ---------------------------------------------------------------------------

def solve_v1(config: SystemConfig, channels: ChannelSet, dt: DtState,
             point: WorkingPoint, *, inner_max: int = INNER_MAX,
             inner_tol: float = INNER_TOL,
             delta_strict: float = DELTA_STRICT) -> tuple[np.ndarray, str]:
    """SCA over the first-hop phases with a lifted unit-disk relaxation.

    After convergence each entry is projected back to unit modulus; the
    projected point is kept only if the true objective does not degrade
    and the causality and monitoring-rate floors still hold.
    """
    K_a, K_o, N = config.K_a, config.K_o, config.N
    T_a, T_o = _lifted_first_hop(config, channels)
    m = point.m
    mt_a = np.stack([T.conj().T @ m for T in T_a])          # (K_a, N+1)
    vt_init = np.concatenate([point.v1.astype(complex), [1.0 + 0j]])
    gains0 = np.abs(mt_a.conj() @ vt_init) ** 2
    sa_u = 1.0 / max(float(np.min(gains0)), 1e-300)
    if K_o > 0:
        mt_o = np.stack([T.conj().T @ m for T in T_o])
        grams_o = [T.conj().T @ T for T in T_o]
        p = point.p
        x_u = max(float(sum(p[k] * np.real(np.vdot(vt_init, grams_o[k]
                                                   @ vt_init))
                            for k in range(K_o))), 1e-6)
        so_u = 1.0 / x_u
        sqrt_o = [_psd_sqrt(Q * (p[k] / x_u)) for k, Q in enumerate(grams_o)]
        ia_u = float(np.sum(p * np.abs(mt_o.conj() @ vt_init) ** 2)) \
            + float(np.linalg.norm(m) ** 2)
    else:
        ia_u = float(np.linalg.norm(m) ** 2)
    B_m = config.B / MBIT
    rate_per_ghz = GHZ / config.rho / MBIT

    report0 = score_point(config, channels, dt, point)
    rhs_const = (point.T2 * B_m * report0.r_c
                 + point.T2 * (report0.R_es / MBIT))

    prog = ConvexProgram("v1")
    vt = prog.complex("vt", N + 1)
    s_a = prog.real("s_a", pos=True)     # in units of sa_u
    i_a = prog.real("i_a", pos=True)     # in units of ia_u
    prog.add(cp.abs(vt[:N]) <= 1, vt[N] == 1)
    a_lin = prog.param("a_lin", (K_a, N + 1), complex=True)
    a_c0 = prog.param("a_c0", K_a)
    prog.add(cp.inv_pos(s_a) <= -a_c0 + 2 * cp.real(cp.conj(a_lin) @ vt))
    ra_c = prog.param("ra_c")
    ra_gs = prog.param("ra_gs", nonneg=True)
    ra_gi = prog.param("ra_gi", nonneg=True)
    prog.add(ra_c - ra_gs * s_a - ra_gi * i_a >= delta_strict)
    obj_const = prog.param("obj_const")
    obj = obj_const - config.w_a * (ra_gs * s_a + ra_gi * i_a)
    if K_o > 0:
        s_o = prog.real("s_o", pos=True)     # in units of so_u
        intf = sum((p[k] / ia_u) * cp.square(cp.abs(cp.conj(vt) @ mt_o[k]))
                   for k in range(K_o))
        prog.add(i_a >= intf + float(np.linalg.norm(m) ** 2) / ia_u)
        o_lin = prog.param("o_lin", N + 1, complex=True)
        o_c0 = prog.param("o_c0")
        prog.add(cp.inv_pos(s_o) <= -o_c0 + 2 * cp.real(cp.conj(o_lin) @ vt))
        x_epi = prog.real("x_epi", nonneg=True)   # in units of x_u
        prog.add(x_epi >= sum(cp.sum_squares(S @ vt) for S in sqrt_o))
        cx_c = prog.param("cx_c")
        cx_s = prog.param("cx_s", nonneg=True)
        prog.add(point.T1 * B_m * (cx_c + cx_s * x_epi) <= rhs_const)
        ro_g = prog.param("ro_g", nonneg=True)
        obj = obj - config.w_o * ro_g * s_o
    else:
        prog.add(i_a >= float(np.linalg.norm(m) ** 2) / ia_u)
    prog.maximize(obj)

    def set_anchor(vt0):
        gains = np.abs(mt_a.conj() @ vt0) ** 2
        sa0 = 1.0 / max(float(np.min(gains)), 1e-300)
        wk = mt_a * (mt_a.conj() @ vt0)[:, None]
        values = dict(a_lin=sa_u * wk, a_c0=sa_u * gains)
        if K_o > 0:
            norms = np.array([float(np.real(np.vdot(vt0, Q @ vt0)))
                              for Q in grams_o])
            ia0 = float(np.sum(p * np.abs(mt_o.conj() @ vt0) ** 2)) \
                + float(np.linalg.norm(m) ** 2)
            x0 = max(float(np.sum(p * norms)), 1e-300)
            so0 = 1.0 / x0
            u = sum(p[k] * (grams_o[k] @ vt0) for k in range(K_o))
            values.update(o_lin=so_u * u, o_c0=so_u * float(np.sum(p * norms)))
            cx_c, cx_s = log2_1p_upper(x0)
            values.update(cx_c=cx_c, cx_s=cx_s * x_u)
            ro = surrogate_ro_low(so0)
            values["ro_g"] = ro.grad * so_u
        else:
            ia0 = float(np.linalg.norm(m) ** 2)
        ra = surrogate_ra_low(config.P_a, sa0, ia0)
        values.update(ra_c=ra.const + ra.grad_s * sa0 + ra.grad_i * ia0,
                      ra_gs=ra.grad_s * sa_u, ra_gi=ra.grad_i * ia_u)
        const = config.w_a * values["ra_c"]
        if K_o > 0:
            const += config.w_o * (ro.const + ro.grad * so0)
        values["obj_const"] = const
        prog.set_params(**values)

    vt0 = vt_init
    prev_obj = None
    solved = False
    for _ in range(inner_max):
        set_anchor(vt0)
        res = prog.solve()
        if res.status != STATUS_OPTIMAL:
            break
        solved = True
        vt0 = res.values["vt"].astype(complex).reshape(N + 1)
        vt0[N] = 1.0
        if prev_obj is not None and abs(res.objective - prev_obj) <= \
                inner_tol * max(abs(prev_obj), 1e-9):
            break
        prev_obj = res.objective
    if not solved:
        return point.v1.copy(), "retained"

    raw = vt0[:N]
    phases = np.where(np.abs(raw) > 1e-12, np.angle(raw), np.angle(point.v1))
    v1_new = np.exp(1j * phases)
    candidate = replace(point, v1=v1_new)
    report_new = score_point(config, channels, dt, candidate)
    slack_scale = max(abs(report_new.causality_slack), point.T1 * config.B, 1.0)
    ok = (report_new.R_total >= report0.R_total * (1 - 1e-9) - 1e-9
          and report_new.causality_slack >= -1e-9 * slack_scale
          and report_new.R_a >= delta_strict)
    if ok:
        return v1_new, "updated"
    return point.v1.copy(), "retained"


# ---------------------------------------------------------------------------
# time allocation
# ---------------------------------------------------------------------------

def solve_time(stage1_rate: float, stage2_rate: float, offload_rate: float,
               process_rate: float, T: float) -> tuple[float, float]:
    """Two-variable linear program over the stage durations.

    Maximizes ``stage1_rate*T1 + stage2_rate*T2`` subject to the period
    budget and ``offload_rate*T1 <= process_rate*T2``.
    """
    if min(stage1_rate, stage2_rate, offload_rate, process_rate) < 0:
        raise ValueError("rates must be nonnegative")
    scale = max(stage1_rate, stage2_rate, 1e-12)
    cscale = max(offload_rate, process_rate, 1e-12)
    prog = ConvexProgram("time")
    T1 = prog.real("T1", nonneg=True)
    T2 = prog.real("T2", nonneg=True)
    prog.add(T1 + T2 <= T)
    prog.add((offload_rate / cscale) * T1 <= (process_rate / cscale) * T2)
    prog.maximize((stage1_rate / scale) * T1 + (stage2_rate / scale) * T2)
    res = prog.solve()
    if res.status != STATUS_OPTIMAL:
        return 0.0, 0.0
    T1v = min(max(float(res.values["T1"]), 0.0), T)
    T2v = min(max(float(res.values["T2"]), 0.0), T - T1v)
    if offload_rate * T1v > process_rate * T2v and offload_rate > 0:
        # remove residual solver slack against the causality line
        T1v = min(T1v, process_rate * T2v / offload_rate)
    return T1v, T2v


# ---------------------------------------------------------------------------
# feasibility restoration
# ---------------------------------------------------------------------------

def restore_feasibility(config: SystemConfig, channels: ChannelSet,
                        m: np.ndarray, t: np.ndarray, v1: np.ndarray, *,
                        delta_strict: float = DELTA_STRICT,
                        max_alternations: int = FEAS_MAX_ALTERNATIONS
                        ) -> FeasibilityState:
    """Alternate decoder-side and phase-side programs until the monitoring
    signal strictly dominates interference plus noise.

    The decoder norm is capped at one; the condition itself is scale
    invariant, so this only bounds the iterates.
    """
    K_a, K_o, M1, N = config.K_a, config.K_o, config.M1, config.N
    v2 = np.ones(N, dtype=complex)
    m = m / max(np.linalg.norm(m), 1e-300)
    t = t.copy() if t.size else np.zeros(0)
    t_lo, t_hi = 1.0 / config.P_o, _T_MAX_FACTOR / config.P_o

    def comps_of(v):
        return _normalized_composites(config, channels, v, v2)

    comps_n = comps_of(v1)
    if monitoring_margin_ok(config.P_a, comps_n, m, t, delta_strict):
        sig, _ = _monitor_ratio(config.P_a, comps_n, m, t)
        return FeasibilityState(sig / config.P_a, m, t, v1, True)

    T_a, T_o = _lifted_first_hop(config, channels)
    best = None
    for _ in range(max_alternations):
        comps_n = comps_of(v1)
        # (a) decoder and powers, phases fixed
        prog_m = ConvexProgram("feas_m")
        mv = prog_m.complex("m", M1)
        gam = prog_m.real("gamma", nonneg=True)
        g_a = comps_n.h_a
        proj = g_a.conj() @ m
        prog_m.add(gam <= config.P_a * (-np.abs(proj) ** 2
                                        + 2 * cp.real((g_a * proj[:, None])
                                                      .conj() @ mv)))
        prog_m.add(cp.norm(mv) <= 1)
        expr = gam - cp.sum_squares(mv)
        if K_o > 0:
            tv = prog_m.real("t", K_o, pos=True)
            prog_m.add(tv >= 1.0, tv <= t_hi / t_lo)
            go_sc = comps_n.h_o * math.sqrt(config.P_o)
            expr = expr - sum(quad_over_lin_c(cp.conj(mv) @ go_sc[k], tv[k])
                              for k in range(K_o))
        prog_m.maximize(expr)
        res = prog_m.solve()
        if res.status == STATUS_OPTIMAL:
            cand = res.values["m"].astype(complex).reshape(M1)
            if np.linalg.norm(cand) > 1e-12:
                m = cand
            if K_o > 0:
                t = np.clip(np.asarray(res.values["t"], float).reshape(K_o)
                            / config.P_o, t_lo, t_hi)
        if monitoring_margin_ok(config.P_a, comps_of(v1), m, t, delta_strict):
            best = (m, t, v1)
            break
        # (b) phases and powers, decoder fixed
        mt_a = np.stack([T.conj().T @ m for T in T_a])
        vt0 = np.concatenate([v1.astype(complex), [1.0 + 0j]])
        prog_v = ConvexProgram("feas_v")
        vt = prog_v.complex("vt", N + 1)
        gam_v = prog_v.real("gamma", nonneg=True)
        z0 = mt_a.conj() @ vt0
        prog_v.add(gam_v <= config.P_a * (-np.abs(z0) ** 2
                                          + 2 * cp.real((mt_a * z0[:, None])
                                                        .conj() @ vt)))
        prog_v.add(cp.abs(vt[:N]) <= 1, vt[N] == 1)
        obj_v = gam_v - float(np.linalg.norm(m) ** 2)
        if K_o > 0:
            tv_v = prog_v.real("t", K_o, pos=True)
            prog_v.add(tv_v >= 1.0, tv_v <= t_hi / t_lo)
            mt_o = np.stack([(T.conj().T @ m) * math.sqrt(config.P_o)
                             for T in T_o])
            obj_v = obj_v - sum(
                quad_over_lin_c(cp.conj(vt) @ mt_o[k], tv_v[k])
                for k in range(K_o))
        prog_v.maximize(obj_v)
        res = prog_v.solve()
        if res.status == STATUS_OPTIMAL:
            raw = res.values["vt"].astype(complex).reshape(N + 1)[:N]
            phases = np.where(np.abs(raw) > 1e-12, np.angle(raw),
                              np.angle(v1))
            v1 = np.exp(1j * phases)
            if K_o > 0:
                t = np.clip(np.asarray(res.values["t"], float).reshape(K_o)
                            / config.P_o, t_lo, t_hi)
        if monitoring_margin_ok(config.P_a, comps_of(v1), m, t, delta_strict):
            best = (m, t, v1)
            break

    satisfied = best is not None
    if best is not None:
        m, t, v1 = best
    sig, _ = _monitor_ratio(config.P_a, comps_of(v1), m, t)
    return FeasibilityState(max(sig / config.P_a, 0.0), m, t, v1, satisfied)


# ---------------------------------------------------------------------------
# phase quantization
# ---------------------------------------------------------------------------

def quantize_phases(v: np.ndarray, spec: QuantizationSpec) -> np.ndarray:
    """Snap unit-modulus entries to the nearest grid phase (circular
    distance, midpoints resolved toward the smaller grid phase)."""
    if np.max(np.abs(np.abs(v) - 1.0)) > 1e-6:
        raise ValueError("input must be unit modulus")
    step = 2 * np.pi / 2 ** spec.l
    theta = np.angle(v) % (2 * np.pi)
    idx = np.ceil(theta / step - 0.5).astype(int) % 2 ** spec.l
    return np.exp(1j * step * idx)
