"""Energy bookkeeping, run instrumentation and power-law refits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Backend, ParticleSystem, SimConfig
from .kernel import BlockRequest, eval_block


@dataclass
class RunStatistics:
    n_particles: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    n_steps_total: int = 0
    block_sizes: list[int] = field(default_factory=list)
    wall_seconds: float = 0.0
    energy_initial: float = 0.0
    energy_final: float = 0.0
    energy_error: float = 0.0
    pairwise_interactions: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0

    def record(self, report, elapsed: float) -> None:
        self.n_steps_total += 1
        self.block_sizes.append(report.block_size)
        self.wall_seconds += elapsed
        self.pairwise_interactions += report.force_evals
        self.bytes_sent += report.bytes_sent
        self.bytes_received += report.bytes_received

    @property
    def mean_block_size(self) -> float:
        return float(np.mean(self.block_sizes)) if self.block_sizes else 0.0

    @property
    def window(self) -> float:
        return self.t_end - self.t_start

    @property
    def steps_per_time_unit(self) -> float:
        return self.n_steps_total / self.window if self.window > 0 else 0.0


@dataclass
class PowerLawFit:
    prefactor: float
    exponent: float
    sample_points: list[tuple[float, float]]
    residuals: np.ndarray

    def __call__(self, n):
        return self.prefactor * np.asarray(n, dtype=np.float64) ** self.exponent


def potential_energy(sys: ParticleSystem, eps: float, backend=Backend.REF64, sorted_accumulation: bool = False) -> float:
    cfg = SimConfig(eps=eps, backend=backend, sorted_accumulation=sorted_accumulation)
    res = eval_block(BlockRequest(np.arange(sys.n), sys.pos, sys.vel), sys.mass, cfg)
    return 0.5 * float(np.dot(sys.mass, res.pot))


def kinetic_energy(sys: ParticleSystem) -> float:
    return 0.5 * float(np.sum(sys.mass * np.sum(sys.vel**2, axis=1)))


def total_energy(sys: ParticleSystem, eps: float, backend=Backend.REF64, sorted_accumulation: bool = False) -> float:
    """K + W, with W from the softened kernel of ``backend``.

    Runs pass their own backend so the energy check sees the force law that
    was actually integrated, float32 rounding included.
    """
    return kinetic_energy(sys) + potential_energy(sys, eps, backend, sorted_accumulation)


def fit_power_law(samples) -> PowerLawFit:
    """Unweighted least squares of ``log(value)`` against ``log(N)``."""
    pts = [(float(n), float(v)) for n, v in samples]
    if len(pts) < 3:
        raise ValueError("need at least 3 samples")
    n, v = np.array(pts).T
    if np.any(n <= 0) or np.any(v <= 0):
        raise ValueError("samples must be positive")
    x, y = np.log(n), np.log(v)
    design = np.column_stack([np.ones_like(x), x])
    (logc, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    return PowerLawFit(float(np.exp(logc)), float(slope), pts, y - design @ [logc, slope])


def measure_run(cfg: SimConfig, p) -> RunStatistics:
    """Generate a Plummer sphere and run it under ``cfg``.

    Generation and integrator start-up happen before the timed window.
    """
    from .integrator import initialize, run
    from .plummer import generate_plummer

    sys = generate_plummer(p)
    initialize(sys, cfg)
    return run(sys, cfg)

