"""Fourth-order Hermite predictor-corrector with power-of-two block time steps."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import diagnostics
from .core import ParticleSystem, SimConfig, TimestepUnderflowError, floor_power_of_two
from .kernel import BlockRequest, TransferPolicy, eval_block, transfer_ledger


@dataclass
class BlockSchedule:
    t_next: float
    members: np.ndarray


@dataclass
class StepReport:
    t_after: float
    block_size: int
    force_evals: int
    bytes_sent: int
    bytes_received: int


Observer = Callable[[float, ParticleSystem, StepReport], None]


def _norm(v):
    return np.sqrt(np.sum(np.asarray(v) ** 2, axis=-1))


def initialize(sys: ParticleSystem, cfg: SimConfig) -> ParticleSystem:
    """Compute acc/jerk for everybody and assign starting time steps."""
    everyone = np.arange(sys.n)
    res = eval_block(BlockRequest(everyone, sys.pos, sys.vel), sys.mass, cfg)
    sys.acc[:] = res.acc
    sys.jerk[:] = res.jerk
    if cfg.fixed_step:
        dt = np.full(sys.n, cfg.dt_max)
    else:
        a, k = _norm(res.acc), _norm(res.jerk)
        with np.errstate(divide="ignore", invalid="ignore"):
            want = np.where(k > 0, cfg.eta_init * a / k, cfg.dt_max)
        want = np.minimum(want, cfg.dt_max)
        if np.any(want < cfg.dt_min):
            i = int(np.argmin(want))
            raise TimestepUnderflowError(f"particle {i} needs initial dt {want[i]:.3e} < dt_min")
        dt = floor_power_of_two(want)
    # commensurability with a non-zero starting time (e.g. a loaded snapshot)
    while sys.t_global != 0.0:
        off = np.fmod(sys.t_global, dt) != 0.0
        if not off.any():
            break
        dt[off] *= 0.5
        if np.any(dt < cfg.dt_min):
            raise TimestepUnderflowError(f"t = {sys.t_global!r} is not commensurate with any allowed step")
    sys.dt_part[:] = dt
    sys.t_part[:] = sys.t_global
    return sys


def select_block(sys: ParticleSystem) -> BlockSchedule:
    due = sys.t_part + sys.dt_part
    t_next = float(due.min())
    return BlockSchedule(t_next, np.flatnonzero(due == t_next))


def predict_all(sys: ParticleSystem, t_next: float):
    dt = t_next - sys.t_part
    if np.any(dt < 0):
        raise ValueError(f"cannot predict backwards to t = {t_next}")
    d = dt[:, None]
    x, v, a, k = sys.pos, sys.vel, sys.acc, sys.jerk
    xp = x + (v + (d / 2) * (a + (d / 3) * k)) * d
    vp = v + (a + (d / 2) * k) * d
    still = dt == 0
    if still.any():
        xp[still] = x[still]
        vp[still] = v[still]
    return xp, vp


def correct_block(xp, vp, a, k, a_p, k_p, dt):
    """Hermite corrector; returns ``(x, v, a2, a3)`` for the block members.

    ``a2`` and ``a3`` are the scaled derivatives ``k' dt^2/2`` and ``k'' dt^3/6``.
    """
    d = np.asarray(dt, dtype=np.float64).reshape(-1, 1)
    a3 = 2 * (a - a_p) + (k + k_p) * d
    a2 = -3 * (a - a_p) - (2 * k + k_p) * d
    x = xp + (a2 / 12 + a3 / 20) * d**2
    v = vp + (a2 / 3 + a3 / 4) * d
    return x, v, a2, a3


def aarseth_dt(a, k, a2, a3, dt_old, eta):
    """Raw criterion dt* from scaled derivatives; ``inf`` where it is undefined."""
    d = np.asarray(dt_old, dtype=np.float64)
    a_1 = _norm(k)
    a_2 = _norm(a2) * 2 / d**2
    a_3 = _norm(a3) * 6 / d**3
    num = _norm(a) * a_2 + a_1**2
    den = a_1 * a_3 + a_2**2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, np.sqrt(eta * num / np.where(den > 0, den, 1.0)), np.inf)


def new_timesteps(a, k, a2, a3, dt_old, t_new: float, cfg: SimConfig) -> np.ndarray:
    """Vectorised :func:`new_timestep` over the members of a block."""
    dt_old = np.asarray(dt_old, dtype=np.float64)
    if cfg.fixed_step:
        return np.full_like(dt_old, cfg.dt_max)
    want = aarseth_dt(a, k, a2, a3, dt_old, cfg.eta)
    out = dt_old.copy()
    shrink = want < dt_old
    if shrink.any():
        out[shrink] = floor_power_of_two(want[shrink])
    grow = (want >= 2 * dt_old) & (np.fmod(t_new, 2 * dt_old) == 0.0)
    out[grow] = 2 * dt_old[grow]
    # no usable derivatives: jump to the largest commensurate step
    for i in np.flatnonzero(np.isinf(want)):
        cand = cfg.dt_max
        while cand > dt_old[i] and np.fmod(t_new, cand) != 0.0:
            cand *= 0.5
        out[i] = max(cand, out[i])
    out = np.minimum(out, cfg.dt_max)
    if np.any(out < cfg.dt_min):
        raise TimestepUnderflowError(
            f"time step {out.min():.3e} below dt_min = {cfg.dt_min:.3e} at t = {t_new}; "
            "close encounters are not treated"
        )
    return out


def new_timestep(a, k, a2, a3, dt_old: float, t_new: float, cfg: SimConfig) -> float:
    """Next power-of-two step for one particle.

    Halves below the criterion immediately; doubles only when ``t_new`` is a
    multiple of the doubled step, so the block structure survives.
    """
    rows = [np.asarray(v, dtype=np.float64).reshape(1, 3) for v in (a, k, a2, a3)]
    return float(new_timesteps(*rows, np.array([dt_old]), t_new, cfg)[0])


def step(sys: ParticleSystem, cfg: SimConfig, policy: TransferPolicy = TransferPolicy.ALL_PARTICLES) -> StepReport:
    block = select_block(sys)
    m = block.members
    xp, vp = predict_all(sys, block.t_next)
    req = BlockRequest(m, xp, vp)
    res = eval_block(req, sys.mass, cfg)
    dt = block.t_next - sys.t_part[m]
    x, v, a2, a3 = correct_block(xp[m], vp[m], sys.acc[m], sys.jerk[m], res.acc, res.jerk, dt)
    # a2 shifted to the end of the step: a(2)(t+dt) = a(2)(t) + a(3) dt
    new_dt = new_timesteps(res.acc, res.jerk, a2 + 3 * a3, a3, dt, block.t_next, cfg)
    sys.pos[m] = x
    sys.vel[m] = v
    sys.acc[m] = res.acc
    sys.jerk[m] = res.jerk
    sys.t_part[m] = block.t_next
    sys.dt_part[m] = new_dt
    sys.t_global = block.t_next
    sent, received = transfer_ledger(req, policy)
    return StepReport(block.t_next, len(m), len(m) * (sys.n - 1), sent, received)


def _notify(observers, sys: ParticleSystem, report: StepReport) -> None:
    if not observers:
        return
    sys.set_writeable(False)
    try:
        for obs in observers:
            obs(sys.t_global, sys, report)
    finally:
        sys.set_writeable(True)


def run(sys: ParticleSystem, cfg: SimConfig, observers: Iterable[Observer] = ()) -> "diagnostics.RunStatistics":
    """Integrate to ``cfg.t_end``, instrumenting the window ``[measure_from, t_end]``.

    A fresh system is initialized first.  Steps ending after ``measure_from``
    count towards the window statistics; if ``t_end <= t_global`` nothing is
    integrated.
    """
    observers = list(observers)
    t_end = cfg.t_end
    if t_end > sys.t_global and np.fmod(t_end, cfg.dt_max) != 0.0:
        raise ValueError(f"t_end = {t_end} is not a multiple of dt_max = {cfg.dt_max}")
    if t_end > sys.t_global and not sys.initialized:
        initialize(sys, cfg)
    stats = diagnostics.RunStatistics(n_particles=sys.n, t_start=max(cfg.measure_from, sys.t_global), t_end=max(t_end, sys.t_global))
    stats.energy_initial = diagnostics.total_energy(sys, cfg.eps, cfg.backend, cfg.sorted_accumulation)
    while sys.t_global < t_end:
        t0 = time.perf_counter()
        report = step(sys, cfg)
        elapsed = time.perf_counter() - t0
        if report.t_after > cfg.measure_from:
            stats.record(report, elapsed)
        _notify(observers, sys, report)
    stats.energy_final = diagnostics.total_energy(sys, cfg.eps, cfg.backend, cfg.sorted_accumulation)
    stats.energy_error = abs((stats.energy_final - stats.energy_initial) / stats.energy_initial)
    return stats
