"""Equal-mass Plummer spheres in virial equilibrium.

Sampling follows the classic Aarseth-Henon-Wielen recipe.  Random numbers
come from numpy's PCG64 seeded with ``seed``; per particle the draws are
consumed in a fixed order: one for the enclosed-mass fraction, two for the
position direction, pairs of uniforms for the speed rejection loop, then
two for the velocity direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ParticleSystem, new_system
from .diagnostics import kinetic_energy, potential_energy

# max of q^2 (1 - q^2)^(7/2) on [0, 1] is ~0.0920
_G_ENVELOPE = 0.1


@dataclass(frozen=True)
class PlummerParams:
    n: int
    seed: int = 0
    mass_cut: float = 0.999

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0.0 < self.mass_cut < 1.0:
            raise ValueError(f"mass_cut must lie in (0, 1), got {self.mass_cut}")


def enclosed_mass(r):
    """Cumulative mass fraction of a unit Plummer sphere (scale length 1)."""
    r = np.asarray(r, dtype=np.float64)
    return r**3 / (1.0 + r**2) ** 1.5


def radius_for_mass(q):
    return (np.asarray(q, dtype=np.float64) ** (-2.0 / 3.0) - 1.0) ** -0.5


def _direction(rng: np.random.Generator) -> np.ndarray:
    cos_t = 2.0 * rng.random() - 1.0
    phi = 2.0 * math.pi * rng.random()
    sin_t = math.sqrt(1.0 - cos_t * cos_t)
    return np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t])


def sample_structural(p: PlummerParams):
    """Raw draws in structural units (G = M = b = 1), before any rescaling.

    Returns ``(radii, positions, velocities, escape_speeds)``.
    """
    rng = np.random.Generator(np.random.PCG64(p.seed))
    radii = np.empty(p.n)
    vesc = np.empty(p.n)
    pos = np.empty((p.n, 3))
    vel = np.empty((p.n, 3))
    for i in range(p.n):
        q = p.mass_cut * rng.random()
        while q == 0.0:
            q = p.mass_cut * rng.random()
        r = float(radius_for_mass(q))
        pos[i] = r * _direction(rng)
        while True:
            x = rng.random()
            y = _G_ENVELOPE * rng.random()
            if y < x * x * (1.0 - x * x) ** 3.5:
                break
        ve = math.sqrt(2.0) * (1.0 + r * r) ** -0.25
        vel[i] = x * ve * _direction(rng)
        radii[i] = r
        vesc[i] = ve
    return radii, pos, vel, vesc


def scale_to_standard(sys: ParticleSystem) -> ParticleSystem:
    """Move to the centre-of-mass frame and rescale to M = 1, K = 1/4, W = -1/2.

    W is evaluated without softening.  A system at rest keeps zero
    velocities since there is nothing to scale.
    """
    sys.mass /= sys.mass.sum()
    sys.pos -= sys.mass @ sys.pos
    sys.vel -= sys.mass @ sys.vel
    w = potential_energy(sys, 0.0)
    if not w < 0.0:
        raise ValueError("degenerate system: zero potential energy")
    sys.pos *= w / -0.5
    k = kinetic_energy(sys)
    if k > 0.0:
        sys.vel *= math.sqrt(0.25 / k)
    return sys


def generate_plummer(p: PlummerParams) -> ParticleSystem:
    _, pos, vel, _ = sample_structural(p)
    sys = new_system(np.full(p.n, 1.0 / p.n), pos, vel)
    return scale_to_standard(sys)

