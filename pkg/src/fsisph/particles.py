"""Particle storage, lattice generation, cell-list neighbor search, and the solid bond graph.

Particles live in struct-of-arrays form (one numpy array per field) so the
numba rate kernels can iterate them directly. Bonds connect immediate lattice
neighbors of the solid phase and carry the pseudo-spring interaction factor f.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

__all__ = [
    "Phase",
    "Rect",
    "Particles",
    "ParticleBuilder",
    "Bonds",
    "NeighborGrid",
    "build_lattice",
    "lattice_counts",
    "build_bonds",
    "brute_force_neighbors",
    "LATTICE_FIT_TOL",
    "BOND_CUTOFF_TOL",
]

LATTICE_FIT_TOL = 0.005   # relative misfit allowed between block side and n*dp
BOND_CUTOFF_TOL = 1e-3    # bond cutoff = sqrt(2)*dp*(1 + tol)


class Phase(IntEnum):
    FLUID = 0
    SOLID = 1
    WALL = 2


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; half-open [x0, x0+width) x [y0, y0+height)."""

    x0: float
    y0: float
    width: float
    height: float

    @property
    def x1(self) -> float:
        return self.x0 + self.width

    @property
    def y1(self) -> float:
        return self.y0 + self.height

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


def lattice_counts(rect: Rect, dp: float, snap: bool = False) -> tuple[int, int]:
    """Number of lattice columns/rows for a block; validates the fit unless snapping."""
    if dp <= 0.0:
        raise ValueError(f"particle spacing must be positive, got {dp}")
    if rect.width <= 0.0 or rect.height <= 0.0:
        raise ValueError(f"zero-area rectangle {rect}")
    if dp > rect.width or dp > rect.height:
        raise ValueError(f"spacing dp={dp} exceeds a side of {rect}")
    nx = max(int(round(rect.width / dp)), 1)
    ny = max(int(round(rect.height / dp)), 1)
    if not snap:
        for n, side, label in ((nx, rect.width, "width"), (ny, rect.height, "height")):
            if abs(n * dp - side) > LATTICE_FIT_TOL * side:
                raise ValueError(
                    f"dp={dp} does not divide {label}={side} within "
                    f"{LATTICE_FIT_TOL:.1%} (closest lattice: {n} cells)"
                )
    return nx, ny


def build_lattice(rect: Rect, dp: float, snap: bool = False) -> np.ndarray:
    """Cell-centered square lattice covering the rectangle; row-major, bottom-up."""
    nx, ny = lattice_counts(rect, dp, snap=snap)
    ix = np.arange(nx, dtype=np.float64)
    iy = np.arange(ny, dtype=np.float64)
    xs = rect.x0 + (ix + 0.5) * dp
    ys = rect.y0 + (iy + 0.5) * dp
    gx, gy = np.meshgrid(xs, ys)  # row-major: y varies slowest
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass
class Particles:
    """Struct-of-arrays particle state for all phases."""

    x: np.ndarray        # (n, 2) positions [m]
    v: np.ndarray        # (n, 2) velocities [m/s]
    rho: np.ndarray      # (n,) densities [kg/m^3]
    m: np.ndarray        # (n,) masses [kg]
    p: np.ndarray        # (n,) pressures [Pa]
    h: np.ndarray        # (n,) smoothing lengths [m]
    c0: np.ndarray       # (n,) phase sound speeds [m/s]
    sxx: np.ndarray      # (n,) deviatoric stress components [Pa] (solid)
    syy: np.ndarray
    sxy: np.ndarray
    phase: np.ndarray    # (n,) uint8 Phase codes
    pinned: np.ndarray   # (n,) bool; velocity forced to zero, position frozen

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def phase_indices(self, phase: Phase) -> np.ndarray:
        return np.nonzero(self.phase == int(phase))[0]

    def copy(self) -> "Particles":
        return Particles(
            x=self.x.copy(), v=self.v.copy(), rho=self.rho.copy(), m=self.m.copy(),
            p=self.p.copy(), h=self.h.copy(), c0=self.c0.copy(),
            sxx=self.sxx.copy(), syy=self.syy.copy(), sxy=self.sxy.copy(),
            phase=self.phase.copy(), pinned=self.pinned.copy(),
        )


class ParticleBuilder:
    """Accumulates lattice blocks (plus deletions and pinned regions) into Particles."""

    def __init__(self, dp: float, h: float):
        self.dp = dp
        self.h = h
        self._pos: list[np.ndarray] = []
        self._phase: list[np.ndarray] = []
        self._rho0: list[np.ndarray] = []
        self._c0: list[np.ndarray] = []
        self._removed: list[Rect] = []
        self._pinned: list[Rect] = []

    def add_block(self, rect: Rect, phase: Phase, rho0: float, c0: float,
                  snap: bool = False) -> int:
        pos = build_lattice(rect, self.dp, snap=snap)
        self._pos.append(pos)
        n = pos.shape[0]
        self._phase.append(np.full(n, int(phase), dtype=np.uint8))
        self._rho0.append(np.full(n, rho0))
        self._c0.append(np.full(n, c0))
        return n

    def remove(self, rect: Rect) -> None:
        """Delete all particles inside the rectangle (applied at build time)."""
        self._removed.append(rect)

    def pin(self, rect: Rect) -> None:
        """Freeze particles inside the rectangle (clamps and supports)."""
        self._pinned.append(rect)

    def build(self) -> Particles:
        if not self._pos:
            raise ValueError("no particle blocks added")
        x = np.concatenate(self._pos, axis=0)
        phase = np.concatenate(self._phase)
        rho0 = np.concatenate(self._rho0)
        c0 = np.concatenate(self._c0)

        keep = np.ones(x.shape[0], dtype=bool)
        for rect in self._removed:
            keep &= ~rect.contains(x[:, 0], x[:, 1])
        x, phase, rho0, c0 = x[keep], phase[keep], rho0[keep], c0[keep]

        pinned = np.zeros(x.shape[0], dtype=bool)
        for rect in self._pinned:
            pinned |= rect.contains(x[:, 0], x[:, 1])

        n = x.shape[0]
        return Particles(
            x=np.ascontiguousarray(x),
            v=np.zeros((n, 2)),
            rho=rho0.copy(),
            m=rho0 * self.dp * self.dp,
            p=np.zeros(n),
            h=np.full(n, self.h),
            c0=c0,
            sxx=np.zeros(n), syy=np.zeros(n), sxy=np.zeros(n),
            phase=phase,
            pinned=pinned,
        )


# ---------------------------------------------------------------------------
# Uniform-grid (cell list) neighbor search
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bin_particles(x, ox, oy, inv_cell, nx, ny):
    n = x.shape[0]
    cid = np.empty(n, dtype=np.int64)
    for i in range(n):
        ix = int((x[i, 0] - ox) * inv_cell)
        iy = int((x[i, 1] - oy) * inv_cell)
        cid[i] = iy * nx + ix
    counts = np.zeros(nx * ny + 1, dtype=np.int64)
    for i in range(n):
        counts[cid[i] + 1] += 1
    start = np.cumsum(counts)
    order = np.empty(n, dtype=np.int64)
    fill = start[:-1].copy()
    for i in range(n):  # ascending i keeps per-cell order deterministic
        c = cid[i]
        order[fill[c]] = i
        fill[c] += 1
    return cid, start, order


@njit(cache=True)
def _query_one(i, x, cid, start, order, nx, ny, inv_cell, radius, out):
    cx = cid[i] % nx
    cy = cid[i] // nx
    ring = int(math.ceil(radius * inv_cell))
    r2 = radius * radius
    count = 0
    for dy in range(-ring, ring + 1):
        yy = cy + dy
        if yy < 0 or yy >= ny:
            continue
        for dx in range(-ring, ring + 1):
            xx = cx + dx
            if xx < 0 or xx >= nx:
                continue
            c = yy * nx + xx
            for k in range(start[c], start[c + 1]):
                j = order[k]
                if j == i:
                    continue
                ddx = x[i, 0] - x[j, 0]
                ddy = x[i, 1] - x[j, 1]
                if ddx * ddx + ddy * ddy < r2:
                    out[count] = j
                    count += 1
    return count


@njit(cache=True)
def _pair_csr(x, phase, cid, start, order, nx, ny, inv_cell, radius):
    """Directed neighbor CSR within `radius`, excluding solid-solid and wall-wall pairs."""
    n = x.shape[0]
    ring = int(math.ceil(radius * inv_cell))
    r2 = radius * radius
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        cx = cid[i] % nx
        cy = cid[i] // nx
        pi = phase[i]
        c_count = 0
        for dy in range(-ring, ring + 1):
            yy = cy + dy
            if yy < 0 or yy >= ny:
                continue
            for dx in range(-ring, ring + 1):
                xx = cx + dx
                if xx < 0 or xx >= nx:
                    continue
                c = yy * nx + xx
                for k in range(start[c], start[c + 1]):
                    j = order[k]
                    if j == i:
                        continue
                    pj = phase[j]
                    if pi == pj and (pi == 1 or pi == 2):  # solid-solid, wall-wall
                        continue
                    ddx = x[i, 0] - x[j, 0]
                    ddy = x[i, 1] - x[j, 1]
                    if ddx * ddx + ddy * ddy < r2:
                        c_count += 1
        counts[i + 1] = c_count
    nstart = np.cumsum(counts)
    nidx = np.empty(nstart[n], dtype=np.int64)
    for i in range(n):
        cx = cid[i] % nx
        cy = cid[i] // nx
        pi = phase[i]
        w = nstart[i]
        for dy in range(-ring, ring + 1):
            yy = cy + dy
            if yy < 0 or yy >= ny:
                continue
            for dx in range(-ring, ring + 1):
                xx = cx + dx
                if xx < 0 or xx >= nx:
                    continue
                c = yy * nx + xx
                for k in range(start[c], start[c + 1]):
                    j = order[k]
                    if j == i:
                        continue
                    pj = phase[j]
                    if pi == pj and (pi == 1 or pi == 2):
                        continue
                    ddx = x[i, 0] - x[j, 0]
                    ddy = x[i, 1] - x[j, 1]
                    if ddx * ddx + ddy * ddy < r2:
                        nidx[w] = j
                        w += 1
        # insertion sort the row: sorted-by-index accumulation is reproducible
        lo = nstart[i]
        for a in range(lo + 1, w):
            key = nidx[a]
            b = a - 1
            while b >= lo and nidx[b] > key:
                nidx[b + 1] = nidx[b]
                b -= 1
            nidx[b + 1] = key
    return nstart, nidx


class NeighborGrid:
    """Uniform cell grid; every query of radius <= cell_size scans one cell ring."""

    def __init__(self, cell_size: float):
        if cell_size <= 0.0:
            raise ValueError("cell size must be positive")
        self.cell_size = cell_size
        self._built_for: np.ndarray | None = None

    def build(self, x: np.ndarray) -> None:
        self._x = np.ascontiguousarray(x, dtype=np.float64)
        pad = self.cell_size
        self._ox = float(self._x[:, 0].min()) - pad
        self._oy = float(self._x[:, 1].min()) - pad
        self._inv = 1.0 / self.cell_size
        self._nx = int((self._x[:, 0].max() - self._ox) * self._inv) + 2
        self._ny = int((self._x[:, 1].max() - self._oy) * self._inv) + 2
        self._cid, self._start, self._order = _bin_particles(
            self._x, self._ox, self._oy, self._inv, self._nx, self._ny)

    def query(self, i: int, radius: float) -> np.ndarray:
        """Indices j != i with |x_i - x_j| < radius, ascending."""
        out = np.empty(self._x.shape[0], dtype=np.int64)
        count = _query_one(i, self._x, self._cid, self._start, self._order,
                           self._nx, self._ny, self._inv, radius, out)
        found = out[:count]
        found.sort()
        return found

    def pair_csr(self, phase: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """Directed CSR neighbor lists for the rate kernels (solid-solid and
        wall-wall pairs excluded; those interact through bonds / not at all)."""
        return _pair_csr(self._x, phase, self._cid, self._start, self._order,
                         self._nx, self._ny, self._inv, radius)


def brute_force_neighbors(x: np.ndarray, i: int, radius: float) -> np.ndarray:
    """O(n^2) reference for neighbor_query tests."""
    d = x - x[i]
    r2 = np.sum(d * d, axis=1)
    mask = r2 < radius * radius
    mask[i] = False
    return np.nonzero(mask)[0]


# ---------------------------------------------------------------------------
# Solid bond graph (pseudo-springs between immediate lattice neighbors)
# ---------------------------------------------------------------------------

@dataclass
class Bonds:
    """Pseudo-spring bonds: pairs of solid particle indices with rest geometry.

    f is 1 while intact, 0 after failure; transitions are permanent. The CSR
    arrays give, per particle, its directed bond entries (neighbor + bond id).
    """

    i: np.ndarray          # (B,) lower particle index of each bond
    j: np.ndarray          # (B,) higher particle index
    rest_vec: np.ndarray   # (B, 2) initial displacement x_j - x_i
    rest_len: np.ndarray   # (B,)
    f: np.ndarray          # (B,) interaction factor in {0.0, 1.0}
    start: np.ndarray      # (n+1,) CSR offsets over all particles
    nbr: np.ndarray        # (2B,) neighbor particle per directed entry
    bond_id: np.ndarray    # (2B,) owning bond per directed entry
    n_init: np.ndarray     # (n,) initial bond count per particle

    @property
    def n_bonds(self) -> int:
        return self.i.shape[0]

    def broken_count(self) -> int:
        return int(np.count_nonzero(self.f == 0.0))

    @classmethod
    def empty(cls, n_particles: int) -> "Bonds":
        z = np.zeros(0, dtype=np.int64)
        return cls(i=z, j=z.copy(), rest_vec=np.zeros((0, 2)), rest_len=np.zeros(0),
                   f=np.zeros(0), start=np.zeros(n_particles + 1, dtype=np.int64),
                   nbr=z.copy(), bond_id=z.copy(),
                   n_init=np.zeros(n_particles, dtype=np.int64))


def build_bonds(pts: Particles, dp: float, tol: float = BOND_CUTOFF_TOL) -> Bonds:
    """Bond each solid particle to its immediate lattice neighbors.

    On the initial square lattice the cutoff sqrt(2)*dp*(1+tol) captures the
    8-neighborhood: 8 bonds interior, 5 on an edge, 3 at a corner.
    """
    solid = pts.phase_indices(Phase.SOLID)
    n = pts.n
    if solid.size == 0:
        return Bonds.empty(n)

    cutoff = math.sqrt(2.0) * dp * (1.0 + tol)
    xs = pts.x[solid]
    grid = NeighborGrid(cell_size=cutoff)
    grid.build(xs)

    bi: list[int] = []
    bj: list[int] = []
    for a in range(solid.size):
        for b in grid.query(a, cutoff):
            if b > a:
                bi.append(int(solid[a]))
                bj.append(int(solid[b]))
    bi_arr = np.asarray(bi, dtype=np.int64)
    bj_arr = np.asarray(bj, dtype=np.int64)
    order = np.lexsort((bj_arr, bi_arr))
    bi_arr, bj_arr = bi_arr[order], bj_arr[order]

    rest_vec = pts.x[bj_arr] - pts.x[bi_arr]
    rest_len = np.sqrt(np.sum(rest_vec * rest_vec, axis=1))

    nb = bi_arr.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    np.add.at(deg, bi_arr, 1)
    np.add.at(deg, bj_arr, 1)
    start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=start[1:])
    nbr = np.empty(2 * nb, dtype=np.int64)
    bond_id = np.empty(2 * nb, dtype=np.int64)
    fill = start[:-1].copy()
    for b in range(nb):  # bonds are sorted, so each row comes out sorted
        ii, jj = bi_arr[b], bj_arr[b]
        nbr[fill[ii]] = jj
        bond_id[fill[ii]] = b
        fill[ii] += 1
        nbr[fill[jj]] = ii
        bond_id[fill[jj]] = b
        fill[jj] += 1
    # rows owned by higher-index particles list lower neighbors first already
    # (bond order is lexicographic), but re-sort each row by neighbor index
    # to make the contract explicit.
    for q in range(n):
        lo, hi = start[q], start[q + 1]
        if hi - lo > 1:
            sl = np.argsort(nbr[lo:hi], kind="stable")
            nbr[lo:hi] = nbr[lo:hi][sl]
            bond_id[lo:hi] = bond_id[lo:hi][sl]

    return Bonds(i=bi_arr, j=bj_arr, rest_vec=rest_vec, rest_len=rest_len,
                 f=np.ones(nb), start=start, nbr=nbr, bond_id=bond_id,
                 n_init=deg)


@njit(cache=True)
def _component_count(n, bi, bj, f, is_solid):
    parent = np.arange(n, dtype=np.int64)
    for b in range(bi.shape[0]):
        if f[b] != 1.0:
            continue
        ra = bi[b]
        while parent[ra] != ra:
            parent[ra] = parent[parent[ra]]
            ra = parent[ra]
        rb = bj[b]
        while parent[rb] != rb:
            parent[rb] = parent[parent[rb]]
            rb = parent[rb]
        if ra != rb:
            parent[rb] = ra
    count = 0
    for q in range(n):  # roots of solid trees are solid: bonds only join solids
        if not is_solid[q]:
            continue
        r = q
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        if r == q:
            count += 1
    return count


def component_count(bonds: Bonds, pts: Particles) -> int:
    """Connected components of the intact (f=1) bond graph over solid particles."""
    is_solid = pts.phase == int(Phase.SOLID)
    if bonds.n_bonds == 0:
        return int(np.count_nonzero(is_solid))
    return int(_component_count(pts.n, bonds.i, bonds.j, bonds.f, is_solid))
