"""Shared state, configuration and snapshot I/O.

Everything is in N-body units: G = 1, total mass 1 and total energy -1/4
for a standard system.  Vectors are stored as ``(n, 3)`` float64 arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Backend(str, enum.Enum):
    REF64 = "ref64"
    STREAM32 = "stream32"


class TimestepUnderflowError(RuntimeError):
    """Raised when the time-step criterion asks for less than ``dt_min``."""


class SingularityError(ZeroDivisionError):
    """Raised for a coincident particle pair with zero softening."""

    def __init__(self, i: int, j: int):
        super().__init__(f"particles {i} and {j} coincide with eps = 0")
        self.pair = (i, j)


def is_power_of_two(x: float) -> bool:
    if not (x > 0 and math.isfinite(x)):
        return False
    return math.frexp(x)[0] == 0.5


def floor_power_of_two(x):
    """Largest power of two ``<= x`` (elementwise, exact)."""
    mant, expo = np.frexp(np.asarray(x, dtype=np.float64))
    return np.ldexp(1.0, expo - 1)


@dataclass
class SimConfig:
    eps: float = 1.0 / 256.0
    dt_max: float = 0.125
    dt_min: float = 2.0**-23
    eta: float = 0.02
    eta_init: float = 0.01
    t_end: float = 0.5
    measure_from: float = 0.25
    seed: int = 0
    backend: Backend = Backend.REF64
    sorted_accumulation: bool = False
    grav_const: float = field(default=1.0, init=False)

    def __post_init__(self):
        self.backend = Backend(self.backend)
        if not self.eps >= 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        for name in ("dt_max", "dt_min"):
            if not is_power_of_two(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")
        # dt_min == dt_max is the forced shared-step mode used for convergence tests
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        if self.eta <= 0 or self.eta_init <= 0:
            raise ValueError("eta and eta_init must be positive")

    @property
    def eps2(self) -> float:
        return self.eps * self.eps

    @property
    def fixed_step(self) -> bool:
        return self.dt_min == self.dt_max


@dataclass
class ParticleSystem:
    mass: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    jerk: np.ndarray
    t_part: np.ndarray
    dt_part: np.ndarray
    t_global: float = 0.0

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def initialized(self) -> bool:
        """False until the integrator assigned every particle a time step."""
        return not np.isnan(self.dt_part).any()

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            self.mass.copy(), self.pos.copy(), self.vel.copy(), self.acc.copy(),
            self.jerk.copy(), self.t_part.copy(), self.dt_part.copy(), self.t_global,
        )

    def _arrays(self):
        return (self.mass, self.pos, self.vel, self.acc, self.jerk, self.t_part, self.dt_part)

    def set_writeable(self, flag: bool) -> None:
        for a in self._arrays():
            a.flags.writeable = flag


def new_system(masses, positions, velocities, t_global: float = 0.0) -> ParticleSystem:
    mass = np.array(masses, dtype=np.float64).reshape(-1)
    pos = np.array(positions, dtype=np.float64).reshape(-1, 3)
    vel = np.array(velocities, dtype=np.float64).reshape(-1, 3)
    n = len(mass)
    if len(pos) != n or len(vel) != n:
        raise ValueError(f"length mismatch: {n} masses, {len(pos)} positions, {len(vel)} velocities")
    if n < 2:
        raise ValueError(f"need at least 2 particles, got {n}")
    if not (np.all(np.isfinite(mass)) and np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
        raise ValueError("non-finite input")
    if np.any(mass <= 0):
        raise ValueError("masses must be positive")
    return ParticleSystem(
        mass=mass,
        pos=pos,
        vel=vel,
        acc=np.zeros((n, 3)),
        jerk=np.zeros((n, 3)),
        t_part=np.full(n, float(t_global)),
        dt_part=np.full(n, np.nan),
        t_global=float(t_global),
    )


def total_mass(sys: ParticleSystem) -> float:
    return float(np.sum(sys.mass))


def write_snapshot(sys: ParticleSystem, path) -> None:
    """Write ``n t_global`` then one ``mass px py pz vx vy vz`` line per particle."""
    lines = [f"{sys.n} {sys.t_global!r}"]
    data = np.column_stack([sys.mass, sys.pos, sys.vel])
    for row in data:
        lines.append(" ".join(f"{v:.17e}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> ParticleSystem:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad snapshot header")
        n, t = int(header[0]), float(header[1])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (n, 7):
        raise ValueError(f"{path}: expected {n} rows of 7 values, got shape {data.shape}")
    return new_system(data[:, 0], data[:, 1:4], data[:, 4:7], t_global=t)
