"""Scenario configuration: system parameters, geometry, and unit helpers.

All quantities are carried in SI units (W, Hz, s, cycles/s, meters).
dB/dBm inputs are converted once, at construction time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1e3


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt * 1e3)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the hybrid computing network.

    Rate weights must satisfy ``w_a + w_o == 1``.  ``aircomp_bandwidth``
    keeps the bandwidth factor on the monitoring-rate term of the
    objective (the default); switching it off is a sensitivity hook only.
    """

    K_a: int = 20               # monitoring (AirComp) UEs
    K_o: int = 5                # task-offloading (MEC) UEs
    M1: int = 5                 # edge-server antennas
    M2: int = 5                 # cloud-server antennas
    N: int = 10                 # reflecting elements
    B: float = 1e6              # bandwidth, Hz
    T: float = 1.0              # total period, s
    P_a: float = dbm_to_watt(5.0)    # AirComp UE power budget, W
    P_o: float = dbm_to_watt(5.0)    # MEC UE power budget, W
    P_es: float = dbm_to_watt(20.0)  # edge-server power budget, W
    sigma_e2: float = dbm_to_watt(-80.0)  # noise power at ES, W
    sigma_c2: float = dbm_to_watt(-80.0)  # noise power at CS, W
    rho: float = 500.0          # CPU cycles per bit
    kappa: float = 1e-28        # CPU energy coefficient, W.s^3/cycle^3
    F_lo_max: float = 1e7       # effective CPU cap of each MEC UE, cycles/s
    F_es_max: float = 1e9       # effective CPU cap of the ES, cycles/s
    w_a: float = 0.5            # monitoring-rate weight
    w_o: float = 0.5            # computing-rate weight
    aircomp_bandwidth: bool = True
    l_bits: int | None = None   # phase-quantization bits, None = continuous
    seed: int = 0

    def __post_init__(self) -> None:
        if self.K_a < 1:
            raise ValueError("K_a must be >= 1")
        if self.K_o < 0:
            raise ValueError("K_o must be >= 0")
        for name in ("M1", "M2", "N"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("B", "T", "P_a", "P_o", "P_es", "sigma_e2", "sigma_c2",
                     "rho", "kappa", "F_lo_max", "F_es_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.w_a < 0 or self.w_o < 0 or abs(self.w_a + self.w_o - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if self.l_bits is not None and self.l_bits < 1:
            raise ValueError("l_bits must be >= 1 when set")


@dataclass(frozen=True)
class Topology:
    """Node geometry and the distance-dependent path-loss model.

    ``path_loss`` returns the linear power gain rho_0 * (d / d_0)^(-alpha).
    Link classes through the reflecting surface use the milder exponent.
    """

    es_pos: tuple[float, float, float] = (0.0, 0.0, 20.0)
    irs_pos: tuple[float, float, float] = (0.0, 2.0, 20.0)
    cs_pos: tuple[float, float, float] = (-30.0, 0.0, 20.0)
    aircomp_center: tuple[float, float, float] = (15.0, 15.0, 0.0)
    aircomp_radius: float = 5.0
    mec_center: tuple[float, float, float] = (20.0, 20.0, 0.0)
    mec_radius: float = 5.0
    rho_0: float = 1e-3         # path loss at reference distance, linear
    d_0: float = 1.0            # reference distance, m
    alpha_ue_es: float = 3.3
    alpha_es_cs: float = 3.3
    alpha_ue_irs: float = 2.3
    alpha_es_irs: float = 2.3
    alpha_irs_cs: float = 2.3

    def __post_init__(self) -> None:
        if self.rho_0 <= 0 or self.d_0 <= 0:
            raise ValueError("rho_0 and d_0 must be > 0")
        if self.aircomp_radius <= 0 or self.mec_radius <= 0:
            raise ValueError("cluster radii must be > 0")
        for name in ("alpha_ue_es", "alpha_es_cs", "alpha_ue_irs",
                     "alpha_es_irs", "alpha_irs_cs"):
            if getattr(self, name) <= 2.0:
                raise ValueError(f"{name} must be > 2")

    def path_loss(self, d: float, alpha: float) -> float:
        if d <= 0:
            raise ValueError("distance must be > 0")
        return self.rho_0 * (d / self.d_0) ** (-alpha)


DEFAULT_TOPOLOGY = Topology()
