"""Analytic wall-clock model for a block-step code on host + attached processor.

Per block step::

    t_step = t_pred_corr + t_force + t_comm
    t_pred_corr = t_host * N
    t_force     = t_fe * N * n_block / n_pipe
    t_comm      = (t_send + t_recv) * n_send        (0 on a bare host)

and per N-body time unit ``total = n_steps * t_step`` with the empirical fits
``n_block = 0.20 N^0.81`` and ``n_steps = 247 N^0.35``.  Coefficients are the
measured per-particle / per-interaction times of four 2007-era setups.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

NBLOCK_PREFACTOR, NBLOCK_EXPONENT = 0.20, 0.81
NSTEPS_PREFACTOR, NSTEPS_EXPONENT = 247.0, 0.35
# operations per force evaluation on the GPU shader pipeline
ETA_FE_GPU = 60.0


class SendPolicy(str, enum.Enum):
    BLOCK_ONLY = "block-only"
    ALL_PARTICLES = "all-particles"


class CapacityExceeded(ValueError):
    pass


@dataclass(frozen=True)
class HardwareProfile:
    name: str
    t_host_per_particle: float
    t_force_per_interaction: float
    n_pipe: int
    t_send_per_particle: float = 0.0
    t_recv_per_particle: float = 0.0
    send_policy: SendPolicy = SendPolicy.BLOCK_ONLY
    memory_particles: float = math.inf
    host_only: bool = False

    def __post_init__(self):
        if self.t_host_per_particle <= 0 or self.t_force_per_interaction <= 0:
            raise ValueError(f"{self.name}: time coefficients must be positive")
        if self.n_pipe < 1:
            raise ValueError(f"{self.name}: n_pipe must be >= 1")
        if not self.host_only and (self.t_send_per_particle <= 0 or self.t_recv_per_particle <= 0):
            raise ValueError(f"{self.name}: accelerator profiles need send/receive times")
        object.__setattr__(self, "send_policy", SendPolicy(self.send_policy))


@dataclass(frozen=True)
class ScenarioFlags:
    block_only: bool = False
    host_free: bool = False
    fe1: bool = False

    @classmethod
    def parse(cls, text: str | None) -> "ScenarioFlags":
        names = {"block-only": "block_only", "host-free": "host_free", "fe1": "fe1"}
        flags = {}
        for item in filter(None, (s.strip() for s in (text or "").split(","))):
            if item in ("baseline", "none"):
                continue
            if item not in names:
                raise ValueError(f"unknown scenario {item!r}; choose from {', '.join(names)}")
            flags[names[item]] = True
        return cls(**flags)

    @property
    def label(self) -> str:
        parts = [n for n, on in (("block-only", self.block_only), ("host-free", self.host_free), ("fe1", self.fe1)) if on]
        return ",".join(parts) or "baseline"


@dataclass(frozen=True)
class PerfPrediction:
    profile: str
    scenario: str
    N: int
    n_block: float
    n_steps: float
    t_pred_corr: float
    t_force: float
    t_comm: float
    t_step: float
    total_seconds: float


_K = 1024

GRAPE6AF = HardwareProfile("GRAPE-6Af", 3.82e-7, 1.11e-8, 48, 2.00e-7, 2.00e-7, SendPolicy.BLOCK_ONLY, 128 * _K)
GEFORCE8800GTX = HardwareProfile("GeForce-8800GTX", 3.82e-7, 1.04e-7, 128, 1.76e-5, 5.97e-6, SendPolicy.ALL_PARTICLES, 9362 * _K)
QUADROFX1400 = HardwareProfile("Quadro-FX1400", 3.82e-7, 1.72e-7, 12, 1.89e-5, 5.98e-6, SendPolicy.ALL_PARTICLES, 1562 * _K)
XEON = HardwareProfile("Xeon-host", 3.82e-7, 5.29e-8, 1, host_only=True)

_ALIASES = {
    "grape6af": GRAPE6AF, "grape-6af": GRAPE6AF, "grape": GRAPE6AF,
    "8800gtx": GEFORCE8800GTX, "geforce-8800gtx": GEFORCE8800GTX,
    "fx1400": QUADROFX1400, "quadro-fx1400": QUADROFX1400,
    "xeon": XEON, "xeon-host": XEON, "host": XEON,
}

# measured seconds per quarter N-body time unit; "-" = not measured
_MEASURED = """\
256     0.07098  2.708  3.423  0.1325
512     0.1410   8.777  10.59  0.5941
1024    0.3327   17.46  20.20  2.584
2048    0.7652   45.27  54.16  10.59
4096    1.991    128.3  157.8  50.40
8192    5.552    342.7  617.3  224.7
16384   16.32    924.4  3398   994.0
32768   51.68    1907   13180  4328
65536   178.2    3973   40560  19290
131072  -        8844   -      -
262144  -        22330  -      -
524288  -        63960  -      -
"""


def builtin_profiles() -> list[HardwareProfile]:
    return [GRAPE6AF, GEFORCE8800GTX, QUADROFX1400, XEON]


def get_profile(name: str) -> HardwareProfile:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise KeyError(f"unknown profile {name!r}; known: {', '.join(sorted(set(_ALIASES)))}") from None


def load_profile(path) -> HardwareProfile:
    """Read a flat ``key = value`` profile file (field names as in HardwareProfile)."""
    from .config import read_flat_config

    raw = read_flat_config(path)
    kw = {"name": raw.pop("name", str(path))}
    for key, conv in (("t_host_per_particle", float), ("t_force_per_interaction", float), ("n_pipe", int),
                      ("t_send_per_particle", float), ("t_recv_per_particle", float),
                      ("memory_particles", float), ("send_policy", str)):
        if key in raw:
            kw[key] = conv(raw.pop(key))
    if "host_only" in raw:
        kw["host_only"] = raw.pop("host_only").lower() in ("1", "true", "yes")
    if raw:
        raise ValueError(f"{path}: unknown profile keys {sorted(raw)}")
    return HardwareProfile(**kw)


def reference_timings() -> list[tuple[str, int, float]]:
    names = [p.name for p in builtin_profiles()]
    rows = []
    for line in _MEASURED.splitlines():
        n, *cells = line.split()
        for name, cell in zip(names, cells):
            if cell != "-":
                rows.append((name, int(n), float(cell)))
    return rows


def measured_seconds(profile: str, N: int) -> float | None:
    """Table value scaled to one full N-body time unit (x4), if measured."""
    for name, n, sec in reference_timings():
        if name == profile and n == N:
            return 4.0 * sec
    return None


def model_n_block(N: float) -> float:
    return NBLOCK_PREFACTOR * N**NBLOCK_EXPONENT


def model_n_steps(N: float) -> float:
    return NSTEPS_PREFACTOR * N**NSTEPS_EXPONENT


def predict(profile: HardwareProfile, N: int, scenario: ScenarioFlags = ScenarioFlags()) -> PerfPrediction:
    if N < 2:
        raise ValueError("N must be >= 2")
    if not profile.host_only and N > profile.memory_particles:
        raise CapacityExceeded(f"{profile.name} holds {profile.memory_particles:.0f} particles, asked for {N}")
    n_block = model_n_block(N)
    n_steps = model_n_steps(N)
    t_pred_corr = 0.0 if scenario.host_free else profile.t_host_per_particle * N
    t_fe = profile.t_force_per_interaction / ETA_FE_GPU if scenario.fe1 else profile.t_force_per_interaction
    t_force = t_fe * N * n_block / profile.n_pipe
    if profile.host_only:
        t_comm = 0.0
    else:
        policy = SendPolicy.BLOCK_ONLY if scenario.block_only else profile.send_policy
        n_send = n_block if policy is SendPolicy.BLOCK_ONLY else N
        t_comm = (profile.t_send_per_particle + profile.t_recv_per_particle) * n_send
    t_step = t_pred_corr + t_force + t_comm
    return PerfPrediction(profile.name, scenario.label, N, n_block, n_steps,
                          t_pred_corr, t_force, t_comm, t_step, n_steps * t_step)


def speedup(profile: HardwareProfile, baseline: HardwareProfile, N: int) -> float:
    return predict(baseline, N).total_seconds / predict(profile, N).total_seconds

