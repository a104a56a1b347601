"""No-slip rigid boundaries via fixed dummy particles.

Wall particles never move; each step their pressure is extrapolated from the
adjacent fluid (Shepard-weighted, with a hydrostatic correction for the
offset between wall and fluid samples) and their density follows from
inverting the fluid equation of state.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .fluid import FluidMaterial
from .kernel import KernelSpec, w_value

__all__ = ["wall_pressure", "wall_density", "extrapolate_walls", "DENSITY_ARG_FLOOR"]

FLUID = 0
WALL = 2

# Floor on p_w/p0 + 1 before the 1/gamma root; prevents NaN under strong tension.
DENSITY_ARG_FLOOR = 1e-3


def wall_pressure(x_w, x_f, p_f, rho_f, spec: KernelSpec, gravity,
                  a_w=(0.0, 0.0)) -> float:
    """Shepard-weighted fluid pressure plus hydrostatic correction.

    Returns 0 when no fluid particle is inside the support (empty-support
    convention, not an error).
    """
    x_w = np.asarray(x_w, float)
    x_f = np.asarray(x_f, float).reshape(-1, 2)
    p_f = np.atleast_1d(np.asarray(p_f, float))
    rho_f = np.atleast_1d(np.asarray(rho_f, float))
    g = np.asarray(gravity, float)
    a_w = np.asarray(a_w, float)

    d = x_w[None, :] - x_f  # x_wf
    r = np.sqrt(np.sum(d * d, axis=1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    w = spec.alpha_d * (r / spec.h + 0.5) * t**4
    denom = np.sum(w)
    if denom <= 0.0:
        return 0.0
    num = np.sum(p_f * w) + np.dot(g - a_w, np.sum(rho_f[:, None] * d * w[:, None], axis=0))
    return float(num / denom)


def wall_density(p_w: float, mat: FluidMaterial) -> tuple[float, bool]:
    """Density consistent with the fluid EOS at the extrapolated wall pressure.

    Returns (rho_w, clamped); clamped marks the tension floor being applied.
    """
    arg = p_w / mat.p0 + 1.0
    clamped = arg < DENSITY_ARG_FLOOR
    if clamped:
        arg = DENSITY_ARG_FLOOR
    return mat.rho0 * arg ** (1.0 / mat.gamma_eos), bool(clamped)


@njit(cache=True)
def extrapolate_walls(x, rho, p, phase, h, nstart, nidx, rho0, p0, gamma,
                      gx, gy, awx, awy):
    """In-place wall pressure/density extrapolation; returns tension-clamp count."""
    n = x.shape[0]
    clamped = 0
    inv_gamma = 1.0 / gamma
    for i in range(n):
        if phase[i] != WALL:
            continue
        sw = 0.0
        sp = 0.0
        sdx = 0.0
        sdy = 0.0
        for k in range(nstart[i], nstart[i + 1]):
            j = nidx[k]
            if phase[j] != FLUID:
                continue
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = math.sqrt(dx * dx + dy * dy)
            w = w_value(r, h)
            if w == 0.0:
                continue
            sw += w
            sp += p[j] * w
            sdx += rho[j] * dx * w
            sdy += rho[j] * dy * w
        if sw > 0.0:
            pw = (sp + (gx - awx) * sdx + (gy - awy) * sdy) / sw
        else:
            pw = 0.0
        p[i] = pw
        arg = pw / p0 + 1.0
        if arg < DENSITY_ARG_FLOOR:
            arg = DENSITY_ARG_FLOOR
            clamped += 1
        rho[i] = rho0 * arg**inv_gamma
    return clamped
