"""Wendland C2 kernel, its gradient, and gradient-correction (renormalization) matrices.

All kernel math here is 2D: the normalization 7/(32 pi h^2) and the compact
support radius 2h are hard-coded for two dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "KernelSpec",
    "CorrectionMatrix",
    "COND_LIMIT",
    "LAMBDA_FLOOR",
    "kernel_value",
    "kernel_gradient",
    "correction_matrix",
    "w_value",
    "w_grad_coef",
]

# Moment-matrix condition number above which the correction falls back to identity.
# Keeps the fallback rare but prevents explosive corrected gradients on
# torn-off, nearly collinear stencils after fracture.
COND_LIMIT = 1e8

# Absolute floor on the smaller moment-matrix eigenvalue. A is dimensionless and
# O(0.15..1) for any healthy stencil (interior through corner); a compressively
# collapsed cluster keeps a tiny near-isotropic A whose condition number looks
# fine while A^-1 explodes, so the ratio test alone cannot catch it.
LAMBDA_FLOOR = 0.05


@dataclass(frozen=True)
class KernelSpec:
    """Smoothing length plus the derived 2D normalization and support radius."""

    h: float
    alpha_d: float = field(init=False)
    support_radius: float = field(init=False)

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"smoothing length must be positive, got {self.h}")
        object.__setattr__(self, "alpha_d", 7.0 / (32.0 * math.pi * self.h * self.h))
        object.__setattr__(self, "support_radius", 2.0 * self.h)


@dataclass(frozen=True)
class CorrectionMatrix:
    """Renormalization matrix B = A^-1 for one particle's gradient stencil."""

    B: np.ndarray  # (2, 2)
    degenerate: bool  # identity fallback taken (singular / ill-conditioned stencil)


@njit(cache=True)
def w_value(r, h):
    """Kernel value at center distance r (not normalized)."""
    q = r / h
    t = 2.0 - q
    if t < 0.0:
        return 0.0
    return 7.0 / (32.0 * math.pi * h * h) * (q + 0.5) * t * t * t * t


@njit(cache=True)
def w_grad_coef(r, h):
    """Scalar c such that grad_i W = c * (x_i - x_j).

    Finite everywhere (no 1/r), zero at and beyond the support radius 2h.
    """
    q = r / h
    t = 2.0 - q
    if t < 0.0:
        return 0.0
    return -35.0 / (32.0 * math.pi) * t * t * t / (h * h * h * h)


def kernel_value(q, spec: KernelSpec):
    """Kernel value at normalized distance q = r/h. Rejects negative q."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0.0):
        raise ValueError("normalized distance must be non-negative")
    t = np.maximum(2.0 - q, 0.0)
    out = spec.alpha_d * (q + 0.5) * t**4
    return float(out) if out.ndim == 0 else out


def kernel_gradient(r_ij, spec: KernelSpec):
    """Gradient with respect to particle i of W(|r_ij|/h); r_ij = x_i - x_j.

    Accepts a single displacement (2,) or a batch (n, 2). Zero beyond the
    support radius and at r_ij = 0 (the limit of the radial form).
    """
    r_ij = np.asarray(r_ij, dtype=np.float64)
    r = np.sqrt(np.sum(r_ij * r_ij, axis=-1))
    t = np.maximum(2.0 - r / spec.h, 0.0)
    coef = -5.0 * spec.alpha_d * t**3 / spec.h**2
    return np.expand_dims(coef, -1) * r_ij


def correction_matrix(x_i, x_j, m_j, rho_j, f_j, spec: KernelSpec,
                      cond_limit: float = COND_LIMIT,
                      lambda_floor: float = LAMBDA_FLOOR) -> CorrectionMatrix:
    """Renormalization matrix from a bonded-neighbor stencil.

    A[b, a] = -sum_j f_j (m_j/rho_j) x_ij[b] gradW_ij[a]; B = A^-1. A singular
    or ill-conditioned stencil (condition number beyond ``cond_limit``) falls
    back to the identity and is flagged degenerate.
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_j.shape[0] == 0:
        raise ValueError("correction matrix requires a non-empty neighbor list")
    m_j = np.asarray(m_j, dtype=np.float64)
    rho_j = np.asarray(rho_j, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)

    d = x_i[None, :] - x_j  # (n, 2)
    grad = kernel_gradient(d, spec)
    w = f_j * m_j / rho_j
    A = -np.einsum("n,nb,na->ba", w, d, grad)

    axx, ayy = A[0, 0], A[1, 1]
    aoff = 0.5 * (A[0, 1] + A[1, 0])  # symmetric for radial kernels; symmetrize roundoff
    half_tr = 0.5 * (axx + ayy)
    disc = math.sqrt(max(0.25 * (axx - ayy) ** 2 + aoff * aoff, 0.0))
    lmax = half_tr + disc
    lmin = half_tr - disc
    if not (lmin > lambda_floor) or lmax > cond_limit * lmin:
        return CorrectionMatrix(B=np.eye(2), degenerate=True)
    det = axx * ayy - aoff * aoff
    B = np.array([[ayy, -aoff], [-aoff, axx]]) / det
    return CorrectionMatrix(B=B, degenerate=False)
