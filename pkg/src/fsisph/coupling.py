"""Fluid-structure coupling via a soft repulsive particle contact force.

Fluid and deformable-solid particles interact only through this short-range
force (never through each other's SPH sums). The fluid particle of a pair
receives the printed acceleration; its solid partner receives the
equal-and-opposite impulse via mass-ratio scaling. Solid particles also feel
the same repulsion from rigid wall dummies to prevent penetration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .particles import Particles

__all__ = ["ContactParams", "contact_kernel_f", "contact_force",
           "assemble_fsi_forces", "contact_accel", "R0_CLAMP_FRAC"]

FLUID = 0
SOLID = 1
WALL = 2

R0_CLAMP_FRAC = 1e-6  # coincident pair: r clamped to this fraction of dp


@dataclass(frozen=True)
class ContactParams:
    """Contact scale constants: sound speed, spacing (= cutoff), smoothing length."""

    c: float
    dp: float
    h: float

    @property
    def cutoff(self) -> float:
        return self.dp


@njit(cache=True)
def contact_kernel_f(eta):
    """Piecewise repulsion profile; continuous on (0, 2], zero beyond 2."""
    if eta <= 0.0:
        return 0.0
    if eta <= 2.0 / 3.0:
        return 2.0 / 3.0
    if eta <= 1.0:
        return 2.0 * eta - 1.5 * eta * eta
    if eta <= 2.0:
        t = 2.0 - eta
        return 0.5 * t * t
    return 0.0


def contact_force(x_i, x_j, params: ContactParams,
                  fallback_sign: float = 1.0) -> tuple[np.ndarray, bool]:
    """Repulsive acceleration on particle i of a close pair (i fluid-side).

    Zero at and beyond the cutoff dp. A coincident pair (r = 0) gets the force
    along the deterministic fallback direction sign*(+x) with r clamped;
    returns (acceleration, r0_event).
    """
    x_i = np.asarray(x_i, float)
    x_j = np.asarray(x_j, float)
    dx = x_i[0] - x_j[0]
    dy = x_i[1] - x_j[1]
    r = math.hypot(dx, dy)
    r0_event = False
    if r >= params.cutoff:
        return np.zeros(2), False
    if r < R0_CLAMP_FRAC * params.dp:
        r = R0_CLAMP_FRAC * params.dp
        dx, dy = fallback_sign * r, 0.0
        r0_event = True
    eta = r / (0.75 * params.h)
    zeta = 1.0 - r / params.dp
    mag = 0.01 * params.c * params.c * zeta * contact_kernel_f(eta) / (r * r)
    return np.array([mag * dx, mag * dy]), r0_event


@njit(cache=True)
def contact_accel(x, m, phase, nstart, nidx, c, dp, h, ax, ay):
    """Accumulate contact accelerations for fluid-solid and solid-wall pairs.

    Gather-form: each movable particle sums its own side of every pair, so the
    result is independent of iteration order. Returns the count of coincident
    (r = 0) events.
    """
    n = x.shape[0]
    fac = 0.01 * c * c
    rmin = R0_CLAMP_FRAC * dp
    events = 0
    for i in range(n):
        pi = phase[i]
        if pi == WALL:
            continue
        sax = 0.0
        say = 0.0
        for k in range(nstart[i], nstart[i + 1]):
            j = nidx[k]
            pj = phase[j]
            if pi == FLUID:
                if pj != SOLID:
                    continue
                scale = 1.0
            else:  # solid receiver
                if pj == FLUID:
                    scale = m[j] / m[i]  # mirrored impulse of the fluid-side force
                elif pj == WALL:
                    scale = 1.0
                else:
                    continue
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = math.sqrt(dx * dx + dy * dy)
            if r >= dp:
                continue
            if r < rmin:
                r = rmin
                dx = r if i < j else -r
                dy = 0.0
                events += 1
            eta = r / (0.75 * h)
            zeta = 1.0 - r / dp
            mag = scale * fac * zeta * contact_kernel_f(eta) / (r * r)
            sax += mag * dx
            say += mag * dy
        ax[i] += sax
        ay[i] += say
    return events


def assemble_fsi_forces(pts: Particles, nstart: np.ndarray, nidx: np.ndarray,
                        params: ContactParams) -> np.ndarray:
    """Per-particle contact acceleration additions for the whole state.

    Fluid-fluid and solid-solid pairs contribute nothing here; the summed
    momentum exchange over fluid-solid pairs is zero.
    """
    acc = np.zeros((pts.n, 2))
    contact_accel(pts.x, pts.m, pts.phase, nstart, nidx,
                  params.c, params.dp, params.h, acc[:, 0], acc[:, 1])
    return acc
