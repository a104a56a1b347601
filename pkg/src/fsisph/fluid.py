"""Weakly compressible fluid phase: equation of state, continuity with density
diffusion, viscous stress, artificial viscosity, and the momentum rate.

Two layers are provided: readable per-particle reference functions (used by
tests and anywhere clarity beats speed) and a fused numba kernel
``fluid_rates`` the time stepper calls. Both are built from the same scalar
primitives; an equivalence test keeps them honest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kernel import KernelSpec, w_grad_coef

__all__ = [
    "FluidMaterial",
    "eos_pressure",
    "artificial_viscosity",
    "continuity_rate",
    "viscous_stress",
    "momentum_rate",
    "fluid_rates",
]

FLUID = 0
SOLID = 1
WALL = 2

EPS_H2 = 0.01  # denominator regularizer coefficient: r^2 + 0.01 h^2


@dataclass(frozen=True)
class FluidMaterial:
    """Weakly compressible fluid constants.

    p0 is derived (c0^2 rho0 / gamma_eos). delta scales the density-diffusion
    term; beta1/beta2 are the artificial-viscosity coefficients.
    """

    rho0: float
    c0: float
    mu_f: float = 0.0
    gamma_eos: float = 7.0
    delta: float = 0.1
    beta1: float = 0.1
    beta2: float = 0.0
    p0: float = field(init=False)

    def __post_init__(self):
        if self.rho0 <= 0.0 or self.c0 <= 0.0:
            raise ValueError("rho0 and c0 must be positive")
        if self.delta < 0.0 or self.mu_f < 0.0:
            raise ValueError("delta and mu_f must be non-negative")
        object.__setattr__(self, "p0", self.c0 * self.c0 * self.rho0 / self.gamma_eos)


@njit(cache=True)
def _eos_p(rho, rho0, p0, gamma):
    return p0 * ((rho / rho0) ** gamma - 1.0)


def eos_pressure(rho, mat: FluidMaterial):
    """Stiff equation of state; negative under expansion (no clipping)."""
    rho = np.asarray(rho, dtype=np.float64)
    out = mat.p0 * ((rho / mat.rho0) ** mat.gamma_eos - 1.0)
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def artificial_viscosity(dx, dy, dvx, dvy, h, c_i, c_j, rho_i, rho_j, beta1, beta2):
    """Pairwise shock/damping term pi_ij; zero for receding pairs."""
    vdotx = dvx * dx + dvy * dy
    if vdotx > 0.0:
        return 0.0
    rr = dx * dx + dy * dy
    mu_ij = h * vdotx / (rr + EPS_H2 * h * h)
    cbar = 0.5 * (c_i + c_j)
    rbar = 0.5 * (rho_i + rho_j)
    return (-beta1 * cbar * mu_ij + beta2 * mu_ij * mu_ij) / rbar


# ---------------------------------------------------------------------------
# Per-particle reference forms
# ---------------------------------------------------------------------------

def continuity_rate(x_i, v_i, rho_i, x_j, v_j, rho_j, m_j, mat: FluidMaterial,
                    spec: KernelSpec) -> float:
    """drho/dt for one fluid particle: advective term plus density diffusion."""
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    d = x_i[None, :] - np.asarray(x_j, float)
    dv = v_i[None, :] - np.asarray(v_j, float)
    r = np.sqrt(np.sum(d * d, axis=1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    coef = -5.0 * spec.alpha_d * t**3 / spec.h**2
    grad = coef[:, None] * d
    m_j = np.asarray(m_j, float)
    rho_j = np.asarray(rho_j, float)

    adv = np.sum(m_j * np.sum(dv * grad, axis=1))
    xdotg = np.sum(d * grad, axis=1)
    denom = r * r + EPS_H2 * spec.h**2
    diff = mat.delta * spec.h * mat.c0 * np.sum(
        2.0 * (m_j / rho_j) * (rho_i - rho_j) * xdotg / denom)
    return float(adv + diff)


def viscous_stress(x_i, v_i, x_j, v_j, m_j, rho_j, mu_f: float,
                   spec: KernelSpec) -> np.ndarray:
    """tau = mu_f (grad v + grad v^T) from the plain SPH velocity gradient."""
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    d = x_i[None, :] - np.asarray(x_j, float)
    dv = v_i[None, :] - np.asarray(v_j, float)
    r = np.sqrt(np.sum(d * d, axis=1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    coef = -5.0 * spec.alpha_d * t**3 / spec.h**2
    grad = coef[:, None] * d
    w = np.asarray(m_j, float) / np.asarray(rho_j, float)
    l = -np.einsum("n,na,nb->ab", w, dv, grad)
    return mu_f * (l + l.T)


def momentum_rate(x_i, v_i, rho_i, p_i, tau_i, c_i,
                  x_j, v_j, rho_j, p_j, tau_j, c_j, m_j,
                  mat: FluidMaterial, spec: KernelSpec, gravity) -> np.ndarray:
    """dv/dt for one fluid particle: symmetric stress/pressure forms plus gravity."""
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    x_j = np.asarray(x_j, float)
    v_j = np.asarray(v_j, float)
    tau_j = np.asarray(tau_j, float)  # (n, 2, 2)
    m_j = np.asarray(m_j, float)
    rho_j = np.asarray(rho_j, float)
    p_j = np.asarray(p_j, float)
    c_j = np.asarray(c_j, float)

    acc = np.array(gravity, dtype=float)
    ri2 = 1.0 / (rho_i * rho_i)
    for n in range(x_j.shape[0]):
        dx = x_i[0] - x_j[n, 0]
        dy = x_i[1] - x_j[n, 1]
        r = math.hypot(dx, dy)
        coef = w_grad_coef(r, spec.h)
        if coef == 0.0:
            continue
        gwx, gwy = coef * dx, coef * dy
        pi_ij = artificial_viscosity(dx, dy, v_i[0] - v_j[n, 0], v_i[1] - v_j[n, 1],
                                     spec.h, c_i, c_j[n], rho_i, rho_j[n],
                                     mat.beta1, mat.beta2)
        rj2 = 1.0 / (rho_j[n] * rho_j[n])
        txx = tau_i[0, 0] * ri2 + tau_j[n, 0, 0] * rj2 - pi_ij
        tyy = tau_i[1, 1] * ri2 + tau_j[n, 1, 1] * rj2 - pi_ij
        txy = tau_i[0, 1] * ri2 + tau_j[n, 0, 1] * rj2
        pterm = p_i * ri2 + p_j[n] * rj2
        acc[0] += m_j[n] * ((txx - pterm) * gwx + txy * gwy)
        acc[1] += m_j[n] * (txy * gwx + (tyy - pterm) * gwy)
    return acc


# ---------------------------------------------------------------------------
# Fused array kernel used by the stepper
# ---------------------------------------------------------------------------

@njit(cache=True)
def fluid_rates(x, v, rho, p, m, c0, phase, h, mu_f, delta, c0f, beta1, beta2,
                gx, gy, nstart, nidx, txx, txy, tyy, drho, ax, ay):
    """Continuity + momentum rates for all fluid particles.

    Pass 1 builds the SPH velocity gradient -> viscous stress per fluid
    particle (wall dummies carry zero stress of their own); pass 2 accumulates
    the pairwise sums. Neighbor lists hold fluid and wall indices; solid
    particles never appear in fluid sums (contact handles them).
    """
    n = x.shape[0]
    eps = EPS_H2 * h * h
    for i in range(n):
        txx[i] = 0.0
        txy[i] = 0.0
        tyy[i] = 0.0
    if mu_f > 0.0:
        for i in range(n):
            if phase[i] != FLUID:
                continue
            lxx = 0.0
            lxy = 0.0
            lyx = 0.0
            lyy = 0.0
            for k in range(nstart[i], nstart[i + 1]):
                j = nidx[k]
                if phase[j] == SOLID:
                    continue
                dx = x[i, 0] - x[j, 0]
                dy = x[i, 1] - x[j, 1]
                r = math.sqrt(dx * dx + dy * dy)
                coef = w_grad_coef(r, h)
                if coef == 0.0:
                    continue
                gwx = coef * dx
                gwy = coef * dy
                wvol = m[j] / rho[j]
                dvx = v[i, 0] - v[j, 0]
                dvy = v[i, 1] - v[j, 1]
                lxx -= wvol * dvx * gwx
                lxy -= wvol * dvx * gwy
                lyx -= wvol * dvy * gwx
                lyy -= wvol * dvy * gwy
            txx[i] = 2.0 * mu_f * lxx
            tyy[i] = 2.0 * mu_f * lyy
            txy[i] = mu_f * (lxy + lyx)
    dhc = delta * h * c0f
    for i in range(n):
        if phase[i] != FLUID:
            continue
        ax[i] += gx
        ay[i] += gy
        ri2 = 1.0 / (rho[i] * rho[i])
        for k in range(nstart[i], nstart[i + 1]):
            j = nidx[k]
            pj = phase[j]
            # visit each fluid-fluid pair once; walls are one-sided receivers
            if pj == SOLID or (pj == FLUID and j < i):
                continue
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = math.sqrt(dx * dx + dy * dy)
            coef = w_grad_coef(r, h)
            if coef == 0.0:
                continue
            gwx = coef * dx
            gwy = coef * dy
            dvx = v[i, 0] - v[j, 0]
            dvy = v[i, 1] - v[j, 1]
            rr = dx * dx + dy * dy
            adv = dvx * gwx + dvy * gwy
            xg = dx * gwx + dy * gwy
            diff = dhc * 2.0 * (rho[i] - rho[j]) * xg / (rr + eps)
            pi_ij = artificial_viscosity(dx, dy, dvx, dvy, h, c0[i], c0[j],
                                         rho[i], rho[j], beta1, beta2)
            rj2 = 1.0 / (rho[j] * rho[j])
            bxx = txx[i] * ri2 + txx[j] * rj2 - pi_ij
            byy = tyy[i] * ri2 + tyy[j] * rj2 - pi_ij
            bxy = txy[i] * ri2 + txy[j] * rj2
            pterm = p[i] * ri2 + p[j] * rj2
            fx = (bxx - pterm) * gwx + bxy * gwy
            fy = bxy * gwx + (byy - pterm) * gwy
            drho[i] += m[j] * adv + (m[j] / rho[j]) * diff
            ax[i] += m[j] * fx
            ay[i] += m[j] * fy
            if pj == FLUID:
                drho[j] += m[i] * adv - (m[i] / rho[i]) * diff
                ax[j] -= m[i] * fx
                ay[j] -= m[i] * fy
