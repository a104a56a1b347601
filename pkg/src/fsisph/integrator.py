"""Predictor-corrector (midpoint) time stepping under a CFL-limited step.

Each step evaluates rates twice: once at the current state for the half-step
predictor, once at the half state for the full-step corrector. Wall
extrapolation and EOS refresh run inside every rate evaluation so rates always
see a consistent state; fracture is resolved once per step, after the
corrector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .coupling import ContactParams, contact_accel
from .fluid import FluidMaterial, fluid_rates
from .kernel import COND_LIMIT, KernelSpec, w_value
from .particles import Bonds, NeighborGrid, Particles, Phase
from .solid import SolidMaterial, solid_rates, update_fracture
from .walls import extrapolate_walls

__all__ = ["StepControl", "SimulationError", "Simulation", "cfl_dt", "advance"]

DEFAULT_CFL = 0.25
NEIGHBOR_SKIN = 0.3  # Verlet skin in units of dp; rebuild after skin/2 drift


class SimulationError(RuntimeError):
    """Aborted run; message names the offending particle and time."""


@dataclass
class StepControl:
    cfl: float = DEFAULT_CFL
    dt: float = 0.0
    t: float = 0.0
    end_time: float = 0.0


@njit(cache=True)
def _cfl_scan(v, h, c0):
    best = 1.0e300
    vmax = 0.0
    bad = -1
    for i in range(v.shape[0]):
        vv = v[i, 0] * v[i, 0] + v[i, 1] * v[i, 1]
        if not math.isfinite(vv):
            bad = i
            break
        s = math.sqrt(vv)
        if s > vmax:
            vmax = s
        val = h[i] / (c0[i] + s)
        if val < best:
            best = val
    return best, vmax, bad


@njit(cache=True)
def _max_disp2(x, x_ref):
    worst = 0.0
    for i in range(x.shape[0]):
        dx = x[i, 0] - x_ref[i, 0]
        dy = x[i, 1] - x_ref[i, 1]
        d2 = dx * dx + dy * dy
        if d2 > worst:
            worst = d2
    return worst


@njit(cache=True)
def _refresh_pressure(rho, p, phase, has_fluid, rho0f, p0f, gammaf,
                      has_solid, Ks, rho0s):
    for i in range(rho.shape[0]):
        ph = phase[i]
        if ph == 0 and has_fluid:
            p[i] = p0f * ((rho[i] / rho0f) ** gammaf - 1.0)
        elif ph == 1 and has_solid:
            p[i] = Ks * (rho[i] / rho0s - 1.0)


def cfl_dt(pts: Particles, control: StepControl) -> float:
    """dt = cfl * min_i h_i / (c_i + |v_i|); aborts on non-finite velocities."""
    best, vmax, bad = _cfl_scan(pts.v, pts.h, pts.c0)
    if bad >= 0:
        raise SimulationError(
            f"non-finite velocity at particle {bad} (t={control.t:.6g} s)")
    return control.cfl * best


class Simulation:
    """Owns the particle state, bond graph, and the per-step pipeline."""

    def __init__(self, pts: Particles, bonds: Bonds, dp: float,
                 fluid_mat: FluidMaterial | None = None,
                 solid_mat: SolidMaterial | None = None,
                 gravity=(0.0, 0.0),
                 control: StepControl | None = None,
                 contact_c: float | None = None,
                 cond_limit: float = COND_LIMIT):
        if pts.n == 0:
            raise ValueError("empty particle set")
        if not np.all(pts.h == pts.h[0]):
            raise ValueError("engine assumes a uniform smoothing length")
        self.pts = pts
        self.bonds = bonds
        self.dp = dp
        self.h = float(pts.h[0])
        self.spec = KernelSpec(self.h)
        self.fluid_mat = fluid_mat
        self.solid_mat = solid_mat
        self.gravity = (float(gravity[0]), float(gravity[1]))
        self.control = control if control is not None else StepControl()
        self.cond_limit = cond_limit

        self.has_fluid = bool(np.any(pts.phase == int(Phase.FLUID)))
        self.has_solid = bool(np.any(pts.phase == int(Phase.SOLID)))
        self.has_wall = bool(np.any(pts.phase == int(Phase.WALL)))
        if self.has_fluid and fluid_mat is None:
            raise ValueError("fluid particles present but no fluid material")
        if self.has_solid and solid_mat is None:
            raise ValueError("solid particles present but no solid material")
        if self.has_wall and fluid_mat is None:
            raise ValueError("wall dummies need the fluid material for extrapolation")

        self.needs_grid = self.has_fluid or (self.has_solid and self.has_wall)
        self.contact_enabled = self.has_solid and (self.has_fluid or self.has_wall)
        if self.contact_enabled:
            c = contact_c if contact_c is not None else (
                fluid_mat.c0 if fluid_mat is not None else None)
            if c is None:
                raise ValueError("contact force needs a sound-speed scale")
            self.contact = ContactParams(c=float(c), dp=dp, h=self.h)
        else:
            self.contact = None

        n = pts.n
        self._drho = np.zeros(n)
        self._acc = np.zeros((n, 2))
        self._dsxx = np.zeros(n)
        self._dsyy = np.zeros(n)
        self._dsxy = np.zeros(n)
        self._txx = np.zeros(n)
        self._txy = np.zeros(n)
        self._tyy = np.zeros(n)
        self._bxx = np.ones(n)
        self._bxy = np.zeros(n)
        self._byy = np.ones(n)
        self._pr = np.zeros(n)
        self._x0 = np.zeros((n, 2))
        self._v0 = np.zeros((n, 2))
        self._rho0 = np.zeros(n)
        self._sxx0 = np.zeros(n)
        self._syy0 = np.zeros(n)
        self._sxy0 = np.zeros(n)
        self._pinned_idx = np.nonzero(pts.pinned)[0]

        self._w_dp = w_value(dp, self.h)
        self._n_bar = w_value(0.0, self.h) / self._w_dp

        self._skin = NEIGHBOR_SKIN * dp
        self._list_radius = self.spec.support_radius + self._skin
        self.grid = NeighborGrid(cell_size=self._list_radius) \
            if self.needs_grid else None
        self._nstart = np.zeros(n + 1, dtype=np.int64)
        self._nidx = np.zeros(0, dtype=np.int64)
        self._x_listed = pts.x.copy()

        self.stats: dict = {
            "steps": 0,
            "broken_bonds": 0,
            "first_bond_break": None,
            "degenerate_stencils_peak": 0,
            "r0_contact_events": 0,
            "wall_tension_clamps": 0,
            "max_speed": 0.0,
            "dt_min": math.inf,
            "dt_max": 0.0,
        }

        self.refresh_neighbors()
        self.refresh_derived()

    # -- pipeline pieces ----------------------------------------------------

    def refresh_neighbors(self) -> None:
        if self.grid is None:
            return
        self.grid.build(self.pts.x)
        self._nstart, self._nidx = self.grid.pair_csr(
            self.pts.phase, self._list_radius)
        np.copyto(self._x_listed, self.pts.x)

    def _maybe_refresh_neighbors(self) -> None:
        """Rebuild the pair list once drift can bring a new pair into range.

        The list radius carries a skin over the kernel support, so pairs that
        drift inward stay covered until the rebuild; extra pairs carry zero
        kernel weight.
        """
        if self.grid is None:
            return
        if _max_disp2(self.pts.x, self._x_listed) > (0.5 * self._skin) ** 2:
            self.refresh_neighbors()

    def refresh_derived(self) -> None:
        """EOS pressures for fluid/solid, then wall extrapolation."""
        p = self.pts
        fm = self.fluid_mat
        sm = self.solid_mat
        _refresh_pressure(
            p.rho, p.p, p.phase,
            self.has_fluid or self.has_wall,
            fm.rho0 if fm else 1.0, fm.p0 if fm else 1.0,
            fm.gamma_eos if fm else 7.0,
            self.has_solid, sm.K if sm else 0.0, sm.rho0 if sm else 1.0)
        if self.has_wall and self.has_fluid:
            clamped = extrapolate_walls(
                p.x, p.rho, p.p, p.phase, self.h, self._nstart, self._nidx,
                fm.rho0, fm.p0, fm.gamma_eos,
                self.gravity[0], self.gravity[1], 0.0, 0.0)
            self.stats["wall_tension_clamps"] += int(clamped)

    def compute_rates(self) -> None:
        self.refresh_derived()
        p = self.pts
        self._drho[:] = 0.0
        self._acc[:] = 0.0
        self._dsxx[:] = 0.0
        self._dsyy[:] = 0.0
        self._dsxy[:] = 0.0
        gx, gy = self.gravity
        if self.has_fluid:
            fm = self.fluid_mat
            fluid_rates(p.x, p.v, p.rho, p.p, p.m, p.c0, p.phase, self.h,
                        fm.mu_f, fm.delta, fm.c0, fm.beta1, fm.beta2,
                        gx, gy, self._nstart, self._nidx,
                        self._txx, self._txy, self._tyy,
                        self._drho, self._acc[:, 0], self._acc[:, 1])
        if self.has_solid:
            sm = self.solid_mat
            b = self.bonds
            deg = solid_rates(p.x, p.v, p.rho, p.p, p.m, p.sxx, p.syy, p.sxy,
                              p.c0, p.phase, self.h,
                              b.start, b.nbr, b.bond_id, b.f, b.i, b.j,
                              sm.mu, sm.gamma_ap, self._n_bar, self._w_dp,
                              sm.beta1, sm.beta2, self.cond_limit,
                              gx, gy, self._bxx, self._bxy, self._byy,
                              self._pr,
                              self._drho, self._acc[:, 0], self._acc[:, 1],
                              self._dsxx, self._dsyy, self._dsxy)
            if deg > self.stats["degenerate_stencils_peak"]:
                self.stats["degenerate_stencils_peak"] = int(deg)
        if self.contact is not None:
            ev = contact_accel(p.x, p.m, p.phase, self._nstart, self._nidx,
                               self.contact.c, self.contact.dp, self.contact.h,
                               self._acc[:, 0], self._acc[:, 1])
            self.stats["r0_contact_events"] += int(ev)
        if self._pinned_idx.size:
            self._acc[self._pinned_idx] = 0.0

    def step(self, dt: float) -> None:
        """Advance the full state by dt with the midpoint predictor-corrector."""
        p = self.pts
        np.copyto(self._x0, p.x)
        np.copyto(self._v0, p.v)
        np.copyto(self._rho0, p.rho)
        np.copyto(self._sxx0, p.sxx)
        np.copyto(self._syy0, p.syy)
        np.copyto(self._sxy0, p.sxy)

        half = 0.5 * dt
        self.compute_rates()
        # predictor: x moves with the current v, before v picks up the rates
        p.x[:] = self._x0 + half * p.v
        p.v[:] = self._v0 + half * self._acc
        p.rho[:] = self._rho0 + half * self._drho
        p.sxx[:] = self._sxx0 + half * self._dsxx
        p.syy[:] = self._syy0 + half * self._dsyy
        p.sxy[:] = self._sxy0 + half * self._dsxy
        self._check_density(self.control.t + half)

        self.compute_rates()
        # corrector: full step from the saved state with half-state rates
        p.x[:] = self._x0 + dt * p.v
        p.v[:] = self._v0 + dt * self._acc
        p.rho[:] = self._rho0 + dt * self._drho
        p.sxx[:] = self._sxx0 + dt * self._dsxx
        p.syy[:] = self._syy0 + dt * self._dsyy
        p.sxy[:] = self._sxy0 + dt * self._dsxy

        self.refresh_derived()

        t_new = self.control.t + dt
        if self.solid_mat is not None and self.solid_mat.fracture_enabled \
                and self.bonds.n_bonds:
            broken = update_fracture(self.bonds, p.x, self.solid_mat)
            if broken.size:
                self.stats["broken_bonds"] += int(broken.size)
                if self.stats["first_bond_break"] is None:
                    self.stats["first_bond_break"] = {
                        "t": t_new,
                        "bonds": [
                            {"bond": int(b), "i": int(self.bonds.i[b]),
                             "j": int(self.bonds.j[b])}
                            for b in broken
                        ],
                    }

        self._check_density(t_new)

        self._maybe_refresh_neighbors()
        self.control.t = t_new
        self.control.dt = dt
        self.stats["steps"] += 1
        if dt < self.stats["dt_min"]:
            self.stats["dt_min"] = dt
        if dt > self.stats["dt_max"]:
            self.stats["dt_max"] = dt

    def _check_density(self, t: float) -> None:
        rho_min = float(self.pts.rho.min())
        if not rho_min > 0.0:
            bad = int(np.argmin(self.pts.rho))
            raise SimulationError(
                f"non-positive density rho={rho_min:.6g} at particle {bad} "
                f"(phase {int(self.pts.phase[bad])}, t={t:.6g} s)")

    def next_dt(self) -> float:
        best, vmax, bad = _cfl_scan(self.pts.v, self.pts.h, self.pts.c0)
        if bad >= 0:
            raise SimulationError(
                f"non-finite velocity at particle {bad} (t={self.control.t:.6g} s)")
        if vmax > self.stats["max_speed"]:
            self.stats["max_speed"] = vmax
        return self.control.cfl * best


def advance(sim: Simulation, t_end: float, callback=None) -> None:
    """Step the simulation to t_end; callback(sim) runs after every step."""
    while sim.control.t < t_end - 1e-12:
        dt = min(sim.next_dt(), t_end - sim.control.t)
        sim.step(dt)
        if callback is not None:
            callback(sim)
