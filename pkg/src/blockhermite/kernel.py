"""Direct-summation acceleration, jerk and potential on a block of targets.

Two arithmetic modes share one compiled loop:

* ``ref64``: everything in float64.
* ``stream32``: inputs are rounded to float32 and every intermediate stays
  float32, mimicking a single-precision stream processor that receives the
  full particle set each block step.

Each target sweeps sources in index order ``0..n-1`` skipping itself, so
results are bit-reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba
import numpy as np

from .core import Backend, SimConfig, SingularityError

# float32 words per particle.  In: mass, pos, vel plus the acc and jerk/pot
# accumulator buffers (1 + 3 + 3 + 3 + 4).  Out: acc, jerk, pot (3 + 3 + 1).
BYTES_SENT_PER_PARTICLE = 14 * 4
BYTES_RECEIVED_PER_PARTICLE = 7 * 4


class TransferPolicy(str, enum.Enum):
    ALL_PARTICLES = "all-particles"
    BLOCK_ONLY = "block-only"


@dataclass
class ForceResult:
    acc: np.ndarray
    jerk: np.ndarray
    pot: np.ndarray


@dataclass
class BlockRequest:
    target_indices: np.ndarray
    predicted_pos: np.ndarray
    predicted_vel: np.ndarray

    def __post_init__(self):
        self.target_indices = np.asarray(self.target_indices, dtype=np.int64).reshape(-1)
        self.predicted_pos = np.asarray(self.predicted_pos, dtype=np.float64).reshape(-1, 3)
        self.predicted_vel = np.asarray(self.predicted_vel, dtype=np.float64).reshape(-1, 3)
        n = len(self.predicted_pos)
        if len(self.predicted_vel) != n:
            raise ValueError("predicted_pos and predicted_vel lengths differ")
        t = self.target_indices
        if len(t) and (t.min() < 0 or t.max() >= n):
            raise ValueError("target index out of range")
        if len(np.unique(t)) != len(t):
            raise ValueError("target indices must be distinct")

    @property
    def n(self) -> int:
        return len(self.predicted_pos)

    @property
    def block_size(self) -> int:
        return len(self.target_indices)


_TILE = 256


@numba.njit(cache=True, error_model="numpy")
def _sweep(targets, pos, vel, mass, eps2, zero, one, three, acc, jerk, pot, bad):
    # j outer / targets inner: every target still adds sources in order
    # 0..n-1, but the inner loop vectorises across targets.
    n = pos.shape[0]
    nb = targets.shape[0]
    dt = pos.dtype
    for lo in range(0, nb, _TILE):
        hi = min(lo + _TILE, nb)
        w = hi - lo
        ix = np.empty(w, dtype=np.int64)
        xi = np.empty(w, dtype=dt)
        yi = np.empty(w, dtype=dt)
        zi = np.empty(w, dtype=dt)
        ui = np.empty(w, dtype=dt)
        vi = np.empty(w, dtype=dt)
        wi = np.empty(w, dtype=dt)
        ax = np.zeros(w, dtype=dt)
        ay = np.zeros(w, dtype=dt)
        az = np.zeros(w, dtype=dt)
        jx = np.zeros(w, dtype=dt)
        jy = np.zeros(w, dtype=dt)
        jz = np.zeros(w, dtype=dt)
        p = np.zeros(w, dtype=dt)
        for c in range(w):
            i = targets[lo + c]
            ix[c] = i
            xi[c] = pos[i, 0]
            yi[c] = pos[i, 1]
            zi[c] = pos[i, 2]
            ui[c] = vel[i, 0]
            vi[c] = vel[i, 1]
            wi[c] = vel[i, 2]
        for j in range(n):
            xj, yj, zj = pos[j, 0], pos[j, 1], pos[j, 2]
            uj, vj, wj = vel[j, 0], vel[j, 1], vel[j, 2]
            mj = mass[j]
            hit = 0
            for c in range(w):
                dx = xj - xi[c]
                dy = yj - yi[c]
                dz = zj - zi[c]
                du = uj - ui[c]
                dv = vj - vi[c]
                dw = wj - wi[c]
                r2 = dx * dx + dy * dy + dz * dz + eps2
                self_term = ix[c] == j
                hit += (r2 == zero) & (not self_term)
                # self term: finite dummy distance, zero mass -> exact +-0 contribution
                r2 = one if self_term else r2
                m = zero if self_term else mj
                xdotv = dx * du + dy * dv + dz * dw
                rinv = one / np.sqrt(r2)
                r2inv = rinv * rinv
                r3inv = r2inv * rinv
                r5inv = r2inv * r3inv
                xdotvr5inv = three * xdotv * r5inv
                mr3 = m * r3inv
                mx5 = m * xdotvr5inv
                ax[c] += mr3 * dx
                ay[c] += mr3 * dy
                az[c] += mr3 * dz
                jx[c] += mr3 * du - mx5 * dx
                jy[c] += mr3 * dv - mx5 * dy
                jz[c] += mr3 * dw - mx5 * dz
                p[c] -= m * rinv
            if hit:
                for c in range(w):
                    if ix[c] != j and xi[c] == xj and yi[c] == yj and zi[c] == zj:
                        bad[0] = ix[c]
                        bad[1] = j
                        return
        for c in range(w):
            b = lo + c
            acc[b, 0] = ax[c]
            acc[b, 1] = ay[c]
            acc[b, 2] = az[c]
            jerk[b, 0] = jx[c]
            jerk[b, 1] = jy[c]
            jerk[b, 2] = jz[c]
            pot[b] = p[c]


@numba.njit(cache=True, error_model="numpy")
def _sweep_sorted(targets, pos, vel, mass, eps2, zero, one, three, acc, jerk, pot, bad):
    n = pos.shape[0]
    terms = np.empty((n - 1, 7), dtype=pos.dtype)
    key = np.empty(n - 1, dtype=pos.dtype)
    src = np.empty(n - 1, dtype=np.int64)
    for b in range(targets.shape[0]):
        i = targets[b]
        k = 0
        for j in range(n):
            if j == i:
                continue
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            du = vel[j, 0] - vel[i, 0]
            dv = vel[j, 1] - vel[i, 1]
            dw = vel[j, 2] - vel[i, 2]
            r2 = dx * dx + dy * dy + dz * dz + eps2
            if r2 == zero:
                bad[0] = i
                bad[1] = j
                return
            xdotv = dx * du + dy * dv + dz * dw
            rinv = one / np.sqrt(r2)
            r2inv = rinv * rinv
            r3inv = r2inv * rinv
            r5inv = r2inv * r3inv
            xdotvr5inv = three * xdotv * r5inv
            m = mass[j]
            mr3 = m * r3inv
            mx5 = m * xdotvr5inv
            terms[k, 0] = mr3 * dx
            terms[k, 1] = mr3 * dy
            terms[k, 2] = mr3 * dz
            terms[k, 3] = mr3 * du - mx5 * dx
            terms[k, 4] = mr3 * dv - mx5 * dy
            terms[k, 5] = mr3 * dw - mx5 * dz
            terms[k, 6] = m * rinv
            # |m dx / r^3| squared; monotone in the magnitude
            key[k] = terms[k, 0] * terms[k, 0] + terms[k, 1] * terms[k, 1] + terms[k, 2] * terms[k, 2]
            src[k] = j
            k += 1
        # stable sort keeps ascending source index among equal magnitudes
        order = np.argsort(key, kind="mergesort")
        ax = zero
        ay = zero
        az = zero
        jx = zero
        jy = zero
        jz = zero
        p = zero
        for q in range(n - 1):
            t = order[q]
            ax += terms[t, 0]
            ay += terms[t, 1]
            az += terms[t, 2]
            jx += terms[t, 3]
            jy += terms[t, 4]
            jz += terms[t, 5]
            p -= terms[t, 6]
        acc[b, 0] = ax
        acc[b, 1] = ay
        acc[b, 2] = az
        jerk[b, 0] = jx
        jerk[b, 1] = jy
        jerk[b, 2] = jz
        pot[b] = p


def _run_sweep(sweep, req: BlockRequest, masses, eps2: float, dtype) -> ForceResult:
    dt = np.dtype(dtype)
    pos = np.ascontiguousarray(req.predicted_pos, dtype=dt)
    vel = np.ascontiguousarray(req.predicted_vel, dtype=dt)
    mass = np.ascontiguousarray(masses, dtype=dt)
    if len(mass) != req.n:
        raise ValueError(f"{len(mass)} masses for {req.n} particles")
    b = req.block_size
    acc = np.zeros((b, 3), dtype=dt)
    jerk = np.zeros((b, 3), dtype=dt)
    pot = np.zeros(b, dtype=dt)
    bad = np.full(2, -1, dtype=np.int64)
    if b and req.n > 1:
        scalar = dt.type
        sweep(req.target_indices, pos, vel, mass, scalar(eps2), scalar(0), scalar(1), scalar(3),
              acc, jerk, pot, bad)
    if bad[0] >= 0:
        raise SingularityError(int(bad[0]), int(bad[1]))
    return ForceResult(acc.astype(np.float64), jerk.astype(np.float64), pot.astype(np.float64))


def eval_block(req: BlockRequest, masses, cfg: SimConfig, backend: Backend | None = None) -> ForceResult:
    """Acceleration, jerk and potential on ``req.target_indices`` from all other particles.

    ``backend`` defaults to ``cfg.backend``.  With ``cfg.sorted_accumulation``
    set, the stream32 path dispatches to :func:`eval_block_sorted`.
    """
    backend = Backend(backend if backend is not None else cfg.backend)
    if backend is Backend.REF64:
        return _run_sweep(_sweep, req, masses, cfg.eps2, np.float64)
    if cfg.sorted_accumulation:
        return eval_block_sorted(req, masses, cfg)
    return _run_sweep(_sweep, req, masses, cfg.eps2, np.float32)


def eval_block_sorted(req: BlockRequest, masses, cfg: SimConfig) -> ForceResult:
    """Stream32 evaluation summing each target's contributions smallest first.

    Contributions are ranked by the magnitude of their acceleration term; the
    jerk and potential terms of a source are added in the same order.
    """
    return _run_sweep(_sweep_sorted, req, masses, cfg.eps2, np.float32)


def accumulation_order(req: BlockRequest, masses, cfg: SimConfig, target: int) -> np.ndarray:
    """Source indices in the order :func:`eval_block_sorted` adds them for ``target``."""
    pos = req.predicted_pos.astype(np.float32)
    mass = np.asarray(masses, dtype=np.float32)
    others = np.array([j for j in range(req.n) if j != target], dtype=np.int64)
    dx = pos[others] - pos[target]
    r2 = np.sum(dx * dx, axis=1, dtype=np.float32) + np.float32(cfg.eps2)
    rinv = np.float32(1) / np.sqrt(r2)
    r3inv = rinv * rinv * rinv
    term = (mass[others] * r3inv)[:, None] * dx
    key = np.sum(term * term, axis=1, dtype=np.float32)
    return others[np.argsort(key, kind="stable")]


def transfer_ledger(req: BlockRequest, policy: TransferPolicy = TransferPolicy.ALL_PARTICLES) -> tuple[int, int]:
    """Bytes moved host->device and device->host for one block evaluation."""
    count = req.n if TransferPolicy(policy) is TransferPolicy.ALL_PARTICLES else req.block_size
    return BYTES_SENT_PER_PARTICLE * count, BYTES_RECEIVED_PER_PARTICLE * count
