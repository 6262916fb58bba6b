"""System model: channel generation, composite channels, and exact rate evaluation.

Every function here is a pure function of its arguments.  Scenario
generation is the only RNG consumer and takes its seed from the config,
so identical (config, topology) pairs produce bitwise-identical channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .config import SystemConfig, Topology

LOG2E = np.log2(np.e)


class DegenerateChannelError(ValueError):
    """Raised when an effective monitoring channel is numerically zero."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSet:
    """Baseband channel coefficients for both hops.

    Shapes: ``h_a`` (K_a, M1) and ``h_o`` (K_o, M1) are the direct UE->ES
    vectors; ``f_a`` (K_a, N) and ``f_o`` (K_o, N) the UE->IRS vectors;
    ``G_e`` (N, M1) the IRS->ES matrix (its conjugate transpose is the
    M1 x N matrix applied at the ES); ``H_c`` (M2, M1) the ES->CS matrix;
    ``G_c`` (M2, N) the IRS->CS matrix; ``F_c`` (N, M1) the ES->IRS matrix.
    """

    h_a: np.ndarray
    h_o: np.ndarray
    f_a: np.ndarray
    f_o: np.ndarray
    G_e: np.ndarray
    H_c: np.ndarray
    G_c: np.ndarray
    F_c: np.ndarray

    def __post_init__(self) -> None:
        K_a, M1 = self.h_a.shape
        K_o = self.h_o.shape[0]
        N = self.G_e.shape[0]
        M2 = self.H_c.shape[0]
        expected = {
            "h_o": (K_o, M1), "f_a": (K_a, N), "f_o": (K_o, N),
            "G_e": (N, M1), "H_c": (M2, M1), "G_c": (M2, N), "F_c": (N, M1),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr.view(float))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return (self.h_a.shape[0], self.h_o.shape[0], self.h_a.shape[1],
                self.H_c.shape[0], self.G_e.shape[0])

    def without_reflection(self) -> "ChannelSet":
        """Copy with both reflected hops removed (IRS absent)."""
        return replace(self, G_e=np.zeros_like(self.G_e),
                       G_c=np.zeros_like(self.G_c))


@dataclass(frozen=True)
class IrsConfig:
    """Per-hop phase configurations, unit modulus entry by entry."""

    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("v1", "v2"):
            v = getattr(self, name)
            if v.ndim != 1:
                raise ValueError(f"{name} must be a vector")
            if np.max(np.abs(np.abs(v) - 1.0)) > 1e-9:
                raise ValueError(f"{name} entries must be unit modulus")

    @staticmethod
    def from_phases(theta1: np.ndarray, theta2: np.ndarray) -> "IrsConfig":
        return IrsConfig(np.exp(1j * np.asarray(theta1, dtype=float)),
                         np.exp(1j * np.asarray(theta2, dtype=float)))

    @staticmethod
    def random(N: int, rng: np.random.Generator) -> "IrsConfig":
        return IrsConfig.from_phases(rng.uniform(0, 2 * np.pi, N),
                                     rng.uniform(0, 2 * np.pi, N))


@dataclass(frozen=True)
class DtState:
    """CPU-frequency deviations known to the twin layer (cycles/s)."""

    f_hat_lo: np.ndarray
    f_hat_es: float
    f_hat_cs: float = 0.0

    def __post_init__(self) -> None:
        if np.any(self.f_hat_lo < 0) or self.f_hat_es < 0 or self.f_hat_cs < 0:
            raise ValueError("deviations must be nonnegative")

    @staticmethod
    def zero(K_o: int) -> "DtState":
        return DtState(np.zeros(K_o), 0.0, 0.0)


def make_dt_state(config: SystemConfig, frac_lo: float = 0.1,
                  frac_es: float = 0.1) -> DtState:
    """Deviations as a fraction of each node's nominal CPU cap."""
    if not (0 <= frac_lo <= 1 and 0 <= frac_es <= 1):
        raise ValueError("deviation fractions must lie in [0, 1]")
    return DtState(np.full(config.K_o, frac_lo * config.F_lo_max),
                   frac_es * config.F_es_max, 0.0)


@dataclass(frozen=True)
class Decision:
    """One complete operating point of the network.

    ``m`` is the unnormalized monitoring decoder (the applied decoder is
    ``m / sqrt(eta)``); ``b`` the AirComp transmit scalars; ``p`` the MEC
    transmit powers; ``W`` the ES transmit covariance; the ``f_*`` fields
    are assigned CPU frequencies and ``T1``/``T2`` the stage durations.
    """

    m: np.ndarray
    eta: float
    b: np.ndarray
    p: np.ndarray
    W: np.ndarray
    f_lo1: np.ndarray
    f_lo2: np.ndarray
    f_es: float
    T1: float
    T2: float

    @property
    def t(self) -> np.ndarray:
        """Reciprocal transmit powers (1/W)."""
        with np.errstate(divide="ignore"):
            return np.where(self.p > 0, 1.0 / self.p, np.inf)

    @staticmethod
    def zero(config: SystemConfig) -> "Decision":
        return Decision(
            m=np.zeros(config.M1, dtype=complex), eta=0.0,
            b=np.zeros(config.K_a, dtype=complex), p=np.zeros(config.K_o),
            W=np.zeros((config.M1, config.M1), dtype=complex),
            f_lo1=np.zeros(config.K_o), f_lo2=np.zeros(config.K_o),
            f_es=0.0, T1=0.0, T2=0.0)


@dataclass(frozen=True)
class Composites:
    """Effective channels after adding the reflected paths."""

    h_a: np.ndarray   # (K_a, M1)
    h_o: np.ndarray   # (K_o, M1)
    H_c: np.ndarray   # (M2, M1)


@dataclass(frozen=True)
class RateReport:
    """Every evaluated performance quantity of one operating point."""

    mse_a: float
    R_a: float                # bits/s/Hz
    r_e: np.ndarray           # bits/s/Hz, per MEC UE under index-order SIC
    sum_r_e: float            # bits/s/Hz
    r_c: float                # bits/s/Hz
    R_lo1: np.ndarray         # bits/s
    R_lo2: np.ndarray         # bits/s
    R_es: float               # bits/s
    R_mec: float              # bits
    R_total: float            # bits
    causality_slack: float    # bits, RHS - LHS of the causality constraint
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.flags.values())


# ---------------------------------------------------------------------------
# scenario generation
# ---------------------------------------------------------------------------

def _draw_positions(rng: np.random.Generator, center, radius: float,
                    count: int) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=count))
    ang = rng.uniform(0, 2 * np.pi, size=count)
    pos = np.tile(np.asarray(center, dtype=float), (count, 1))
    pos[:, 0] += r * np.cos(ang)
    pos[:, 1] += r * np.sin(ang)
    return pos


def _cn(rng: np.random.Generator, shape, variance) -> np.ndarray:
    sd = np.sqrt(np.asarray(variance) / 2.0)
    return sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def gen_scenario(config: SystemConfig, topology: Topology) -> ChannelSet:
    """Draw one channel realization: path loss times Rayleigh fading.

    Direct links are drawn before reflected ones, so for a fixed seed the
    direct channels do not depend on the element count N.
    """
    rng = np.random.default_rng(config.seed)
    es = np.asarray(topology.es_pos)
    irs = np.asarray(topology.irs_pos)
    cs = np.asarray(topology.cs_pos)
    pos_a = _draw_positions(rng, topology.aircomp_center,
                            topology.aircomp_radius, config.K_a)
    pos_o = _draw_positions(rng, topology.mec_center,
                            topology.mec_radius, config.K_o)

    def pl(points, node, alpha):
        d = np.linalg.norm(points - node, axis=-1)
        return topology.rho_0 * (d / topology.d_0) ** (-alpha)

    pl_a_es = pl(pos_a, es, topology.alpha_ue_es)
    pl_o_es = pl(pos_o, es, topology.alpha_ue_es)
    pl_es_cs = pl(es[None, :], cs, topology.alpha_es_cs)[0]
    pl_a_irs = pl(pos_a, irs, topology.alpha_ue_irs)
    pl_o_irs = pl(pos_o, irs, topology.alpha_ue_irs)
    pl_irs_es = pl(irs[None, :], es, topology.alpha_es_irs)[0]
    pl_irs_cs = pl(irs[None, :], cs, topology.alpha_irs_cs)[0]
    pl_es_irs = pl_irs_es

    M1, M2, N = config.M1, config.M2, config.N
    h_a = _cn(rng, (config.K_a, M1), pl_a_es[:, None])
    h_o = _cn(rng, (config.K_o, M1), pl_o_es[:, None])
    H_c = _cn(rng, (M2, M1), pl_es_cs)
    f_a = _cn(rng, (config.K_a, N), pl_a_irs[:, None])
    f_o = _cn(rng, (config.K_o, N), pl_o_irs[:, None])
    G_e = _cn(rng, (N, M1), pl_irs_es)
    G_c = _cn(rng, (M2, N), pl_irs_cs)
    F_c = _cn(rng, (N, M1), pl_es_irs)
    return ChannelSet(h_a, h_o, f_a, f_o, G_e, H_c, G_c, F_c)


# ---------------------------------------------------------------------------
# composite channels and rate expressions
# ---------------------------------------------------------------------------

def composite_channels(channels: ChannelSet, irs: IrsConfig) -> Composites:
    """Direct plus reflected paths for both hops."""
    N = channels.G_e.shape[0]
    if irs.v1.shape != (N,) or irs.v2.shape != (N,):
        raise ValueError("phase vectors must have length N")
    Ge_H = channels.G_e.conj().T                      # (M1, N)
    h_a = channels.h_a + (channels.f_a * irs.v1) @ Ge_H.T
    h_o = channels.h_o + (channels.f_o * irs.v1) @ Ge_H.T
    H_c = channels.H_c + (channels.G_c * irs.v2) @ channels.F_c
    return Composites(h_a, h_o, H_c)


def aircomp_mse(comps: Composites, a: np.ndarray, b: np.ndarray,
                p: np.ndarray, sigma_e2: float) -> float:
    """Decoding MSE of the superimposed monitoring signal."""
    if a.shape != (comps.h_a.shape[1],):
        raise ValueError("decoder length must match antenna count")
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    err = comps.h_a.conj() @ a
    err = np.abs(err.conj() * b - 1.0) ** 2
    intf = p * np.abs(comps.h_o.conj() @ a) ** 2 if len(p) else np.zeros(0)
    return float(np.sum(err) + np.sum(intf) + np.linalg.norm(a) ** 2 * sigma_e2)


def uniform_forcing(comps: Composites, m: np.ndarray, P_a: float,
                    p: np.ndarray, sigma_e2: float
                    ) -> tuple[float, np.ndarray, float]:
    """Channel-inverting transceiver: scaling, transmit scalars, and MSE.

    The weakest user transmits at full budget; every other scalar obeys
    ``|b_k|^2 <= P_a``.
    """
    inner = comps.h_a.conj() @ m          # m^H h_a[k], conjugated convention
    inner = inner.conj()
    gains = np.abs(inner) ** 2
    if np.min(gains) <= 0.0 or not np.all(np.isfinite(gains)):
        raise DegenerateChannelError("effective monitoring channel is zero")
    eta = P_a * float(np.min(gains))
    b = np.sqrt(eta) * inner.conj() / gains
    intf = float(np.sum(p * np.abs(comps.h_o.conj() @ m) ** 2)) if len(p) else 0.0
    mse = (intf + np.linalg.norm(m) ** 2 * sigma_e2) / eta
    return eta, b, float(mse)


@dataclass(frozen=True)
class OffloadRates:
    r_e: np.ndarray
    sum_r_e: float


def offload_rates(comps: Composites, p: np.ndarray,
                  sigma_e2: float) -> OffloadRates:
    """Per-user uplink rates under ascending-index SIC plus the closed-form sum.

    The per-user split depends on the decode order; the sum does not.
    """
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    K_o = comps.h_o.shape[0]
    if K_o == 0:
        return OffloadRates(np.zeros(0), 0.0)
    g = p * np.linalg.norm(comps.h_o, axis=1) ** 2
    rem = np.concatenate([np.cumsum(g[::-1])[::-1][1:], [0.0]])
    gamma = g / (rem + sigma_e2)
    r_e = np.log2(1.0 + gamma)
    sum_r_e = float(np.log2(1.0 + np.sum(g) / sigma_e2))
    return OffloadRates(r_e, sum_r_e)


def es_cs_rate(H_c_eff: np.ndarray, W: np.ndarray, sigma_c2: float) -> float:
    """Second-hop offloading rate log2 det(I + H W H^H / sigma^2)."""
    if W.shape[0] != W.shape[1] or W.shape[0] != H_c_eff.shape[1]:
        raise ValueError("W must be square and match the channel")
    scale = max(float(np.max(np.abs(W))), 1e-300)
    if np.max(np.abs(W - W.conj().T)) > 1e-9 * scale:
        raise ValueError("W must be Hermitian")
    if float(np.min(np.linalg.eigvalsh((W + W.conj().T) / 2))) < -1e-9 * scale:
        raise ValueError("W must be positive semidefinite")
    M2 = H_c_eff.shape[0]
    A = np.eye(M2) + H_c_eff @ W @ H_c_eff.conj().T / sigma_c2
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        raise ValueError("log-det argument is not positive definite")
    return float(max(logdet / np.log(2), 0.0))


def local_rate(f_assigned: float, f_hat: float, rho: float) -> float:
    """Bits per second processed by a CPU net of its twin deviation."""
    if f_assigned < f_hat - 1e-9 * max(1.0, abs(f_hat)):
        raise ValueError("assigned frequency is below the deviation")
    return max(f_assigned - f_hat, 0.0) / rho


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _rate_parts(config: SystemConfig, channels: ChannelSet, irs: IrsConfig,
                decision: Decision):
    comps = composite_channels(channels, irs)
    if decision.eta > 0:
        a = decision.m / np.sqrt(decision.eta)
    else:
        a = np.zeros_like(decision.m)
    mse = aircomp_mse(comps, a, decision.b, decision.p, config.sigma_e2)
    R_a = float(np.log2(1.0 / mse)) if 0 < mse < 1 else 0.0
    off = offload_rates(comps, decision.p, config.sigma_e2)
    r_c = es_cs_rate(comps.H_c, decision.W, config.sigma_c2)
    return comps, mse, R_a, off, r_c


def _power_time_flags(config: SystemConfig, irs: IrsConfig, dt: DtState,
                      decision: Decision) -> dict[str, bool]:
    tol_p, tol_t = 1e-9, 1e-9
    kap = config.kappa
    d = decision
    eff1 = d.f_lo1 - dt.f_hat_lo
    eff2 = d.f_lo2 - dt.f_hat_lo
    eff_es = d.f_es - dt.f_hat_es
    scale_w = max(float(np.max(np.abs(d.W))), 0.0) if d.W.size else 0.0
    w_herm = np.max(np.abs(d.W - d.W.conj().T)) <= 1e-9 * max(scale_w, 1e-300)
    w_psd = w_herm and float(
        np.min(np.linalg.eigvalsh((d.W + d.W.conj().T) / 2))
    ) >= -1e-9 * max(scale_w, 1e-300)
    flags = {
        "time_budget": d.T1 + d.T2 <= config.T + tol_t,
        "time_nonneg": d.T1 >= -tol_t and d.T2 >= -tol_t,
        "aircomp_power": bool(np.all(np.abs(d.b) ** 2 <= config.P_a + tol_p)),
        "ue_power_stage1": bool(np.all(
            d.p + kap * np.maximum(eff1, 0.0) ** 3 <= config.P_o + tol_p)),
        "ue_power_stage2": bool(np.all(
            kap * np.maximum(eff2, 0.0) ** 3 <= config.P_o + tol_p)),
        "es_power": float(np.real(np.trace(d.W))) +
            kap * max(eff_es, 0.0) ** 3 <= config.P_es + tol_p,
        "ue_freq_cap_stage1": bool(np.all(
            eff1 <= config.F_lo_max * (1 + 1e-9) + 1e-9)),
        "ue_freq_cap_stage2": bool(np.all(
            eff2 <= config.F_lo_max * (1 + 1e-9) + 1e-9)),
        "es_freq_cap": eff_es <= config.F_es_max * (1 + 1e-9) + 1e-9,
        "freq_above_deviation": bool(np.all(eff1 >= -1e-9) and
                                     np.all(eff2 >= -1e-9) and eff_es >= -1e-9),
        "w_psd": bool(w_psd),
        "unit_modulus_v1": bool(np.max(np.abs(np.abs(irs.v1) - 1)) <= 1e-9),
        "unit_modulus_v2": bool(np.max(np.abs(np.abs(irs.v2) - 1)) <= 1e-9),
    }
    return flags


def _assemble(config: SystemConfig, R_a: float, off: OffloadRates, r_c: float,
              R_lo1: np.ndarray, R_lo2: np.ndarray, R_es: float,
              decision: Decision, mse: float, flags: dict[str, bool],
              cap_offload: bool) -> RateReport:
    T1, T2, B = decision.T1, decision.T2, config.B
    offload_bits = T1 * B * off.sum_r_e
    process_bits = T2 * B * r_c + T2 * R_es
    used_offload = min(offload_bits, process_bits) if cap_offload else offload_bits
    R_mec = used_offload + float(np.sum(T1 * R_lo1 + T2 * R_lo2))
    air_bw = B if config.aircomp_bandwidth else 1.0
    R_total = config.w_a * T1 * air_bw * R_a + config.w_o * R_mec
    slack = process_bits - offload_bits
    scale = max(abs(offload_bits), abs(process_bits), 1.0)
    flags = dict(flags)
    flags["aircomp_rate_positive"] = mse < 1.0
    flags["causality"] = slack >= -1e-9 * scale
    return RateReport(
        mse_a=mse, R_a=R_a, r_e=off.r_e, sum_r_e=off.sum_r_e, r_c=r_c,
        R_lo1=R_lo1, R_lo2=R_lo2, R_es=R_es, R_mec=R_mec, R_total=R_total,
        causality_slack=slack, flags=flags)


def evaluate(config: SystemConfig, channels: ChannelSet, irs: IrsConfig,
             dt: DtState, decision: Decision) -> RateReport:
    """Exact scoring of a decision with twin-aware resource accounting.

    Evaluation is total: constraint violations set flags rather than raise.
    """
    comps, mse, R_a, off, r_c = _rate_parts(config, channels, irs, decision)
    R_lo1 = np.array([local_rate(f, fh, config.rho)
                      for f, fh in zip(decision.f_lo1, dt.f_hat_lo)])
    R_lo2 = np.array([local_rate(f, fh, config.rho)
                      for f, fh in zip(decision.f_lo2, dt.f_hat_lo)])
    R_es = local_rate(decision.f_es, dt.f_hat_es, config.rho)
    flags = _power_time_flags(config, irs, dt, decision)
    return _assemble(config, R_a, off, r_c, R_lo1, R_lo2, R_es,
                     decision, mse, flags, cap_offload=False)


def evaluate_no_dt(config: SystemConfig, channels: ChannelSet, irs: IrsConfig,
                   dt: DtState, decision: Decision) -> RateReport:
    """Score a decision that was designed believing all deviations were zero.

    Power accounting keeps the designer's belief (cubes of the assigned
    frequencies); achieved computing rates subtract the true deviations,
    clamped at zero.  Offloaded bits beyond what the ES and CS can actually
    process within stage two are wasted, so the offloading term is capped
    by the achieved processing capability.
    """
    comps, mse, R_a, off, r_c = _rate_parts(config, channels, irs, decision)
    R_lo1 = np.maximum(decision.f_lo1 - dt.f_hat_lo, 0.0) / config.rho
    R_lo2 = np.maximum(decision.f_lo2 - dt.f_hat_lo, 0.0) / config.rho
    R_es = max(decision.f_es - dt.f_hat_es, 0.0) / config.rho
    flags = _power_time_flags(config, irs, DtState.zero(config.K_o), decision)
    return _assemble(config, R_a, off, r_c, R_lo1, R_lo2, R_es,
                     decision, mse, flags, cap_offload=True)
