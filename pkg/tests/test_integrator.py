import math

import numpy as np
import pytest

from fsisph.fluid import FluidMaterial
from fsisph.integrator import (Simulation, SimulationError, StepControl, advance,
                               cfl_dt)
from fsisph.particles import (Bonds, ParticleBuilder, Phase, Rect, build_bonds)
from fsisph.solid import SolidMaterial

WATER = FluidMaterial(rho0=1000.0, c0=10.0, mu_f=0.0)


def _single_fluid_particle():
    pb = ParticleBuilder(dp=0.01, h=0.015)
    pb.add_block(Rect(0.0, 0.0, 0.01, 0.01), Phase.FLUID, rho0=1000.0, c0=10.0)
    pts = pb.build()
    return Simulation(pts, Bonds.empty(pts.n), 0.01, fluid_mat=WATER,
                      gravity=(0.0, -9.81), control=StepControl())


def test_cfl_single_particle():
    sim = _single_fluid_particle()
    assert cfl_dt(sim.pts, sim.control) == pytest.approx(0.25 * 0.015 / 10.0, rel=1e-14)


def test_cfl_faster_particle_decreases_dt():
    pb = ParticleBuilder(dp=0.01, h=0.015)
    pb.add_block(Rect(0.0, 0.0, 0.05, 0.01), Phase.FLUID, rho0=1000.0, c0=10.0)
    pts = pb.build()
    control = StepControl()
    base = cfl_dt(pts, control)
    pts.v[2] = [30.0, 0.0]
    assert cfl_dt(pts, control) < base
    assert cfl_dt(pts, control) == pytest.approx(0.25 * 0.015 / 40.0, rel=1e-14)


def test_cfl_aborts_on_nan():
    sim = _single_fluid_particle()
    sim.pts.v[0, 0] = math.nan
    with pytest.raises(SimulationError, match="particle 0"):
        cfl_dt(sim.pts, sim.control)


def test_step_fixed_point_for_quiescent_solid():
    pb = ParticleBuilder(dp=0.1, h=0.15)
    pb.add_block(Rect(0.0, 0.0, 0.3, 0.3), Phase.SOLID, rho0=2500.0, c0=20.0)
    pts = pb.build()
    bonds = build_bonds(pts, 0.1)
    mat = SolidMaterial(rho0=2500.0, E=1e6, nu=0.0)
    sim = Simulation(pts, bonds, 0.1, solid_mat=mat, gravity=(0.0, 0.0))
    x0 = pts.x.copy()
    v0 = pts.v.copy()
    rho0 = pts.rho.copy()
    for _ in range(5):
        sim.step(1e-4)
    assert np.array_equal(pts.x, x0)
    assert np.array_equal(pts.v, v0)
    assert np.array_equal(pts.rho, rho0)


def test_step_constant_acceleration_midpoint_exact():
    sim = _single_fluid_particle()
    x0 = sim.pts.x[0].copy()
    dt = 1e-3
    sim.step(dt)
    assert sim.pts.v[0, 1] == pytest.approx(-9.81 * dt, rel=1e-15)
    assert sim.pts.x[0, 1] == pytest.approx(x0[1] - 9.81 * dt**2 / 2.0, rel=1e-15)
    sim.step(dt)  # second step keeps the parabola exact
    assert sim.pts.x[0, 1] == pytest.approx(x0[1] - 9.81 * (2 * dt) ** 2 / 2.0,
                                            rel=1e-14)


def test_step_aborts_on_nonpositive_density():
    pb = ParticleBuilder(dp=0.01, h=0.015)
    pb.add_block(Rect(0.0, 0.0, 0.02, 0.01), Phase.FLUID, rho0=1000.0, c0=10.0)
    pts = pb.build()
    pts.v[0] = [-50.0, 0.0]
    pts.v[1] = [50.0, 0.0]  # violently separating pair
    sim = Simulation(pts, Bonds.empty(pts.n), 0.01, fluid_mat=WATER)
    with pytest.raises(SimulationError, match="non-positive density"):
        for _ in range(200):
            sim.step(5e-3)


def _bonded_pair_sim(dt_scale=1.0):
    """Two solid particles oscillating along their bond; smooth test problem."""
    dp = 0.01
    pb = ParticleBuilder(dp=dp, h=1.5 * dp)
    pb.add_block(Rect(0.0, 0.0, 2 * dp, dp), Phase.SOLID, rho0=1000.0, c0=0.0)
    pts = pb.build()
    mat = SolidMaterial(rho0=1000.0, E=1e6, nu=0.0, gamma_ap=0.0, beta1=0.0,
                        beta2=0.0)
    pts.c0[:] = mat.c0
    bonds = build_bonds(pts, dp)
    pts.v[0] = [0.05, 0.0]
    pts.v[1] = [-0.05, 0.0]
    return Simulation(pts, bonds, dp, solid_mat=mat, gravity=(0.0, 0.0))


def _pair_position_after(T, dt):
    sim = _bonded_pair_sim()
    steps = int(round(T / dt))
    for _ in range(steps):
        sim.step(dt)
    return sim.pts.x[0, 0]


def test_second_order_convergence_on_oscillator():
    T = 2e-3
    dt0 = 2e-6
    ref = _pair_position_after(T, dt0 / 8.0)
    err1 = abs(_pair_position_after(T, dt0) - ref)
    err2 = abs(_pair_position_after(T, dt0 / 2.0) - ref)
    assert err1 > 0.0
    assert err1 / err2 >= 3.5


def test_masses_never_mutated():
    sim = _bonded_pair_sim()
    m0 = sim.pts.m.copy()
    for _ in range(50):
        sim.step(1e-6)
    assert np.array_equal(sim.pts.m, m0)


def test_advance_reaches_end_time():
    sim = _single_fluid_particle()
    sim.control.end_time = 2e-3
    advance(sim, 2e-3)
    assert sim.control.t == pytest.approx(2e-3, abs=1e-12)


def test_unloaded_free_solid_conserves_momentum():
    """Stress-free, force-free solid: momentum stays at machine zero."""
    pb = ParticleBuilder(dp=0.1, h=0.15)
    pb.add_block(Rect(0.0, 0.0, 0.5, 0.3), Phase.SOLID, rho0=2500.0, c0=20.0)
    pts = pb.build()
    bonds = build_bonds(pts, 0.1)
    mat = SolidMaterial(rho0=2500.0, E=1e6, nu=0.0)
    sim = Simulation(pts, bonds, 0.1, solid_mat=mat, gravity=(0.0, 0.0))
    for _ in range(1000):
        sim.step(2e-4)
    mom = np.array([np.sum(pts.m * pts.v[:, 0]), np.sum(pts.m * pts.v[:, 1])])
    assert np.linalg.norm(mom) <= 1e-8 * np.sum(pts.m)


def test_wall_particles_never_move():
    pb = ParticleBuilder(dp=0.01, h=0.015)
    pb.add_block(Rect(0.0, 0.0, 0.05, 0.05), Phase.FLUID, rho0=1000.0, c0=10.0)
    pb.add_block(Rect(0.0, -0.03, 0.05, 0.03), Phase.WALL, rho0=1000.0, c0=10.0)
    pts = pb.build()
    sim = Simulation(pts, Bonds.empty(pts.n), 0.01, fluid_mat=WATER,
                     gravity=(0.0, -9.81))
    walls = pts.phase == int(Phase.WALL)
    xw = pts.x[walls].copy()
    for _ in range(100):
        sim.step(sim.next_dt())
    assert np.array_equal(pts.x[walls], xw)
    assert np.all(pts.v[walls] == 0.0)


def test_determinism_bitwise():
    def run():
        pb = ParticleBuilder(dp=0.01, h=0.015)
        pb.add_block(Rect(0.0, 0.0, 0.06, 0.06), Phase.FLUID, rho0=1000.0, c0=10.0)
        pb.add_block(Rect(-0.03, -0.03, 0.12, 0.03), Phase.WALL, rho0=1000.0,
                     c0=10.0)
        pts = pb.build()
        sim = Simulation(pts, Bonds.empty(pts.n), 0.01,
                         fluid_mat=FluidMaterial(rho0=1000.0, c0=10.0, mu_f=0.05),
                         gravity=(0.0, -9.81))
        for _ in range(60):
            sim.step(sim.next_dt())
        return sim.pts.x.copy(), sim.pts.rho.copy()
    xa, rhoa = run()
    xb, rhob = run()
    assert np.array_equal(xa, xb)
    assert np.array_equal(rhoa, rhob)
