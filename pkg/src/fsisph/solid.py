"""Pseudo-spring solid phase: linear EOS, corrected-gradient kinematics, the
Jaumann deviatoric stress update, artificial pressure, bond fracture, damage.

Solid particles interact only through their bond graph (immediate lattice
neighbors), with renormalized kernel gradients weighted by the pseudo-spring
interaction factor f. Breaking a bond (tensile strain beyond the fracture
strain) permanently removes the pair from every solid sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .fluid import artificial_viscosity
from .kernel import LAMBDA_FLOOR, KernelSpec, w_grad_coef, w_value
from .particles import Bonds

__all__ = [
    "SolidMaterial",
    "solid_eos",
    "velocity_gradient",
    "strain_spin",
    "jaumann_rate",
    "artificial_pressure",
    "continuity_rate_solid",
    "momentum_rate_solid",
    "spring_strain",
    "spring_strains",
    "update_fracture",
    "damage",
    "solid_rates",
]

SOLID = 1


@dataclass(frozen=True)
class SolidMaterial:
    """Elastic solid constants; K, mu, c0 derived from E and nu."""

    rho0: float
    E: float
    nu: float
    gamma_ap: float = 0.3      # artificial-pressure strength
    eps_f: float = 0.05        # fracture strain (tensile bond strain threshold)
    fracture_enabled: bool = False
    beta1: float = 1.0
    beta2: float = 1.0
    K: float = field(init=False)
    mu: float = field(init=False)
    c0: float = field(init=False)

    def __post_init__(self):
        if not (0.0 <= self.nu < 0.5):
            raise ValueError(f"Poisson ratio must be in [0, 0.5), got {self.nu}")
        if self.E <= 0.0 or self.rho0 <= 0.0:
            raise ValueError("E and rho0 must be positive")
        if self.fracture_enabled and not self.eps_f > 0.0:
            raise ValueError("fracture strain must be positive when fracture is enabled")
        K = self.E / (3.0 * (1.0 - 2.0 * self.nu))
        mu = self.E / (2.0 * (1.0 + self.nu))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "c0", math.sqrt(K / self.rho0))


def solid_eos(rho, mat: SolidMaterial):
    """Linear EOS p = K (rho/rho0 - 1); negative under expansion."""
    rho = np.asarray(rho, dtype=np.float64)
    out = mat.K * (rho / mat.rho0 - 1.0)
    return float(out) if out.ndim == 0 else out


def velocity_gradient(v_i, x_i, x_j, v_j, m_j, rho_j, f_j, B,
                      spec: KernelSpec) -> np.ndarray:
    """l[a, b] = -sum_j f_j (m_j/rho_j) (v_i - v_j)[a] (B gradW)[b].

    Exact for linear velocity fields on intact stencils; zero when every bond
    is broken.
    """
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    d = x_i[None, :] - np.asarray(x_j, float)
    dv = v_i[None, :] - np.asarray(v_j, float)
    r = np.sqrt(np.sum(d * d, axis=1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    coef = -5.0 * spec.alpha_d * t**3 / spec.h**2
    grad_hat = (coef[:, None] * d) @ np.asarray(B, float).T
    w = np.asarray(f_j, float) * np.asarray(m_j, float) / np.asarray(rho_j, float)
    return -np.einsum("n,na,nb->ab", w, dv, grad_hat)


def strain_spin(l) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric strain-rate and antisymmetric spin parts of a velocity gradient."""
    l = np.asarray(l, dtype=np.float64)
    eps_dot = 0.5 * (l + l.T)
    omega = 0.5 * (l - l.T)
    return eps_dot, omega


def jaumann_rate(S, eps_dot, omega, mat: SolidMaterial) -> np.ndarray:
    """Objective deviatoric stress rate: elastic deviator plus spin rotation terms."""
    S = np.asarray(S, float)
    eps_dot = np.asarray(eps_dot, float)
    omega = np.asarray(omega, float)
    dev = eps_dot - (np.trace(eps_dot) / 3.0) * np.eye(2)
    return 2.0 * mat.mu * dev + omega @ S - S @ omega


@njit(cache=True)
def tension_scalar(sxx, syy, sxy, p):
    """Magnitude of the dominant principal Cauchy stress.

    This is the tension measure fed to the artificial pressure: at a bending
    face the dangerous tension is deviatoric, which the hydrostatic pressure
    alone does not see.
    """
    c = 0.5 * (sxx + syy) - p
    rad = math.sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy)
    s1 = abs(c + rad)
    s2 = abs(c - rad)
    return s1 if s1 > s2 else s2


def artificial_pressure(pr_i, pr_j, rho_i, rho_j, d_ij, mat: SolidMaterial,
                        dp: float, spec: KernelSpec) -> float:
    """Short-range repulsive term countering tensile particle clumping.

    pr_i/pr_j are the pair's tension magnitudes (dominant principal stress).
    Scales their rho^-2 sum by (W(d)/W(dp))^n with n = W(0)/W(dp), so the term
    equals the bare pair value at the lattice spacing and grows steeply below.
    """
    w_dp = w_value(dp, spec.h)
    n_bar = w_value(0.0, spec.h) / w_dp
    bracket = (w_value(d_ij, spec.h) / w_dp) ** n_bar
    return mat.gamma_ap * (abs(pr_i) / rho_i**2 + abs(pr_j) / rho_j**2) * bracket


def continuity_rate_solid(x_i, v_i, x_j, v_j, m_j, f_j, B,
                          spec: KernelSpec) -> float:
    """drho/dt over bonded neighbors with corrected, f-weighted gradients."""
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    d = x_i[None, :] - np.asarray(x_j, float)
    dv = v_i[None, :] - np.asarray(v_j, float)
    r = np.sqrt(np.sum(d * d, axis=1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    coef = -5.0 * spec.alpha_d * t**3 / spec.h**2
    grad_hat = (coef[:, None] * d) @ np.asarray(B, float).T
    fm = np.asarray(f_j, float) * np.asarray(m_j, float)
    return float(np.sum(fm * np.sum(dv * grad_hat, axis=1)))


def momentum_rate_solid(x_i, v_i, rho_i, p_i, S_i, c_i,
                        x_j, v_j, rho_j, p_j, S_j, c_j, m_j, f_j, B,
                        mat: SolidMaterial, spec: KernelSpec, dp: float,
                        gravity=(0.0, 0.0)) -> np.ndarray:
    """dv/dt over bonds: symmetric stress divergence, artificial viscosity and
    artificial pressure, all f-weighted, plus gravity."""
    x_i = np.asarray(x_i, float)
    v_i = np.asarray(v_i, float)
    x_j = np.asarray(x_j, float)
    v_j = np.asarray(v_j, float)
    S_i = np.asarray(S_i, float)
    S_j = np.asarray(S_j, float)
    B = np.asarray(B, float)
    acc = np.array(gravity, dtype=float)
    ri2 = 1.0 / (rho_i * rho_i)
    sig_i = S_i - p_i * np.eye(2)
    w_dp = w_value(dp, spec.h)
    n_bar = w_value(0.0, spec.h) / w_dp
    pr_i = tension_scalar(S_i[0, 0], S_i[1, 1], S_i[0, 1], p_i)
    for n in range(x_j.shape[0]):
        fb = f_j[n]
        if fb == 0.0:
            continue
        dx = x_i[0] - x_j[n, 0]
        dy = x_i[1] - x_j[n, 1]
        r = math.hypot(dx, dy)
        coef = w_grad_coef(r, spec.h)
        gwx, gwy = coef * dx, coef * dy
        ghx = B[0, 0] * gwx + B[0, 1] * gwy
        ghy = B[1, 0] * gwx + B[1, 1] * gwy
        pi_ij = artificial_viscosity(dx, dy, v_i[0] - v_j[n, 0], v_i[1] - v_j[n, 1],
                                     spec.h, c_i, c_j[n], rho_i, rho_j[n],
                                     mat.beta1, mat.beta2)
        pr_j = tension_scalar(S_j[n, 0, 0], S_j[n, 1, 1], S_j[n, 0, 1], p_j[n])
        pa_ij = mat.gamma_ap * (pr_i * ri2 + pr_j / rho_j[n]**2) \
            * (w_value(r, spec.h) / w_dp) ** n_bar
        rj2 = 1.0 / (rho_j[n] * rho_j[n])
        txx = sig_i[0, 0] * ri2 + (S_j[n, 0, 0] - p_j[n]) * rj2 - pi_ij - pa_ij
        tyy = sig_i[1, 1] * ri2 + (S_j[n, 1, 1] - p_j[n]) * rj2 - pi_ij - pa_ij
        txy = sig_i[0, 1] * ri2 + S_j[n, 0, 1] * rj2
        acc[0] += fb * m_j[n] * (txx * ghx + txy * ghy)
        acc[1] += fb * m_j[n] * (txy * ghx + tyy * ghy)
    return acc


# ---------------------------------------------------------------------------
# Bond strain, fracture, damage
# ---------------------------------------------------------------------------

def spring_strain(rest_len: float, x_i, x_j) -> float:
    """Engineering strain of one pseudo-spring at the current positions."""
    if rest_len <= 0.0:
        raise ValueError("bond rest length must be positive")
    x_i = np.asarray(x_i, float)
    x_j = np.asarray(x_j, float)
    return float((np.linalg.norm(x_j - x_i) - rest_len) / rest_len)


def spring_strains(bonds: Bonds, x: np.ndarray) -> np.ndarray:
    d = x[bonds.j] - x[bonds.i]
    return (np.sqrt(np.sum(d * d, axis=1)) - bonds.rest_len) / bonds.rest_len


@njit(cache=True)
def _fracture_pass(bi, bj, rest_len, f, x, eps_f, broken):
    count = 0
    for b in range(bi.shape[0]):
        if f[b] != 1.0:
            continue
        dx = x[bj[b], 0] - x[bi[b], 0]
        dy = x[bj[b], 1] - x[bi[b], 1]
        strain = (math.sqrt(dx * dx + dy * dy) - rest_len[b]) / rest_len[b]
        if strain > eps_f:
            f[b] = 0.0
            broken[count] = b
            count += 1
    return count


def update_fracture(bonds: Bonds, x: np.ndarray, mat: SolidMaterial) -> np.ndarray:
    """Break every intact bond whose tensile strain exceeds eps_f (permanent).

    Returns the indices of the bonds broken by this call; compression never
    triggers failure.
    """
    if not mat.fracture_enabled or bonds.n_bonds == 0:
        return np.zeros(0, dtype=np.int64)
    broken = np.empty(bonds.n_bonds, dtype=np.int64)
    count = _fracture_pass(bonds.i, bonds.j, bonds.rest_len, bonds.f, x,
                           mat.eps_f, broken)
    return broken[:count].copy()


def damage(bonds: Bonds, n_particles: int) -> np.ndarray:
    """Per-particle damage D = broken bonds / initial bonds (0 for bondless)."""
    D = np.zeros(n_particles)
    if bonds.n_bonds == 0:
        return D
    broken = bonds.f == 0.0
    cnt = np.zeros(n_particles)
    np.add.at(cnt, bonds.i[broken], 1.0)
    np.add.at(cnt, bonds.j[broken], 1.0)
    has = bonds.n_init > 0
    D[has] = cnt[has] / bonds.n_init[has]
    return D


# ---------------------------------------------------------------------------
# Fused array kernel used by the stepper
# ---------------------------------------------------------------------------

@njit(cache=True)
def solid_rates(x, v, rho, p, m, sxx, syy, sxy, c0, phase, h,
                bstart, bnbr, bbond, bond_f, bond_i, bond_j,
                mu_s, gamma_ap, n_bar, w_dp, beta1, beta2, cond_limit,
                gx, gy, Bxx, Bxy, Byy, pr,
                drho, ax, ay, dsxx, dsyy, dsxy):
    """Density, momentum, and deviatoric stress rates for all solid particles.

    Per particle: assemble the f-weighted moment matrix, invert it (identity
    fallback for singular / ill-conditioned stencils), build the corrected
    velocity gradient -> continuity and stress rates. Then one sweep over the
    bonds accumulates the pairwise momentum terms into both endpoints (fixed
    bond order keeps the accumulation reproducible). Returns the
    degenerate-stencil count.
    """
    n = x.shape[0]
    degenerate = 0
    for i in range(n):
        if phase[i] != SOLID:
            continue
        pr[i] = tension_scalar(sxx[i], syy[i], sxy[i], p[i])
        # moment matrix A over intact bonds
        axx = 0.0
        aoff = 0.0
        ayy = 0.0
        n_intact = 0
        for k in range(bstart[i], bstart[i + 1]):
            b = bbond[k]
            fb = bond_f[b]
            if fb == 0.0:
                continue
            j = bnbr[k]
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = math.sqrt(dx * dx + dy * dy)
            coef = w_grad_coef(r, h)
            wv = fb * m[j] / rho[j]
            axx -= wv * dx * coef * dx
            aoff -= wv * dx * coef * dy
            ayy -= wv * dy * coef * dy
            n_intact += 1
        half_tr = 0.5 * (axx + ayy)
        disc = math.sqrt(max(0.25 * (axx - ayy) * (axx - ayy) + aoff * aoff, 0.0))
        lmin = half_tr - disc
        lmax = half_tr + disc
        if n_intact == 0 or not (lmin > LAMBDA_FLOOR) or lmax > cond_limit * lmin:
            bxx = 1.0
            bxy = 0.0
            byy = 1.0
            if n_intact > 0:
                degenerate += 1
        else:
            det = axx * ayy - aoff * aoff
            bxx = ayy / det
            bxy = -aoff / det
            byy = axx / det
        Bxx[i] = bxx
        Bxy[i] = bxy
        Byy[i] = byy

        # corrected velocity gradient and continuity over bonds
        lxx = 0.0
        lxy = 0.0
        lyx = 0.0
        lyy = 0.0
        sum_drho = 0.0
        for k in range(bstart[i], bstart[i + 1]):
            b = bbond[k]
            fb = bond_f[b]
            if fb == 0.0:
                continue
            j = bnbr[k]
            dx = x[i, 0] - x[j, 0]
            dy = x[i, 1] - x[j, 1]
            r = math.sqrt(dx * dx + dy * dy)
            coef = w_grad_coef(r, h)
            gwx = coef * dx
            gwy = coef * dy
            ghx = bxx * gwx + bxy * gwy
            ghy = bxy * gwx + byy * gwy
            dvx = v[i, 0] - v[j, 0]
            dvy = v[i, 1] - v[j, 1]
            wvf = fb * m[j] / rho[j]
            lxx -= wvf * dvx * ghx
            lxy -= wvf * dvx * ghy
            lyx -= wvf * dvy * ghx
            lyy -= wvf * dvy * ghy
            sum_drho += fb * m[j] * (dvx * ghx + dvy * ghy)

        exx = lxx
        eyy = lyy
        exy = 0.5 * (lxy + lyx)
        wsp = 0.5 * (lxy - lyx)
        tre3 = (exx + eyy) / 3.0
        dsxx[i] += 2.0 * mu_s * (exx - tre3) + 2.0 * wsp * sxy[i]
        dsyy[i] += 2.0 * mu_s * (eyy - tre3) - 2.0 * wsp * sxy[i]
        dsxy[i] += 2.0 * mu_s * exy + wsp * (syy[i] - sxx[i])
        drho[i] += sum_drho
        ax[i] += gx
        ay[i] += gy

    # pairwise momentum terms, one visit per bond
    for b in range(bond_i.shape[0]):
        fb = bond_f[b]
        if fb == 0.0:
            continue
        i = bond_i[b]
        j = bond_j[b]
        dx = x[i, 0] - x[j, 0]
        dy = x[i, 1] - x[j, 1]
        r = math.sqrt(dx * dx + dy * dy)
        coef = w_grad_coef(r, h)
        gwx = coef * dx
        gwy = coef * dy
        dvx = v[i, 0] - v[j, 0]
        dvy = v[i, 1] - v[j, 1]
        ri2 = 1.0 / (rho[i] * rho[i])
        rj2 = 1.0 / (rho[j] * rho[j])
        pi_ij = artificial_viscosity(dx, dy, dvx, dvy, h, c0[i], c0[j],
                                     rho[i], rho[j], beta1, beta2)
        pa_ij = gamma_ap * (pr[i] * ri2 + pr[j] * rj2) \
            * (w_value(r, h) / w_dp) ** n_bar
        txx = (sxx[i] - p[i]) * ri2 + (sxx[j] - p[j]) * rj2 - pi_ij - pa_ij
        tyy = (syy[i] - p[i]) * ri2 + (syy[j] - p[j]) * rj2 - pi_ij - pa_ij
        txy = sxy[i] * ri2 + sxy[j] * rj2
        # each side applies its own renormalization: one-sided consistency
        # is what concentrates stress correctly at free surfaces and notch
        # flanks, where cracks must nucleate
        ghx = Bxx[i] * gwx + Bxy[i] * gwy
        ghy = Bxy[i] * gwx + Byy[i] * gwy
        ax[i] += fb * m[j] * (txx * ghx + txy * ghy)
        ay[i] += fb * m[j] * (txy * ghx + tyy * ghy)
        ghx = -(Bxx[j] * gwx + Bxy[j] * gwy)
        ghy = -(Bxy[j] * gwx + Byy[j] * gwy)
        ax[j] += fb * m[i] * (txx * ghx + txy * ghy)
        ay[j] += fb * m[i] * (txy * ghx + tyy * ghy)
    return degenerate
