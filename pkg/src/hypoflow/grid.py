"""Phase-space discretisation, quadrature and weighted norms.

Cell-centred tensor grid over position x and velocity v with midpoint
quadrature in both directions and trapezoid quadrature in time.  The
position axis is a periodic torus [0, L) by default; wall mode uses a
centred box [-L/2, L/2] with zero-flux transport at the walls.

All downstream functionals are measured in the 1/f_stat-weighted L2
norm; f_stat entries below ``WEIGHT_FLOOR`` count as degenerate where
the measured field is nonzero.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeight, DimensionMismatch

WEIGHT_FLOOR = 1e-30

_MAGIC = b"HYPOFLOW"
_VERSION = 1


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid over (x, v) plus the time-step data.

    Attributes:
        n_x: number of position cells
        length_x: extent of the position axis (torus length or box width)
        n_v: number of velocity cells
        v_max: velocity cutoff, domain is [-v_max, v_max]
        dt: time step of the evolution
        window: length T of one certificate window
        wall_x: zero-flux walls instead of the periodic torus
    """

    n_x: int
    length_x: float
    n_v: int
    v_max: float
    dt: float
    window: float
    wall_x: bool = False

    def __post_init__(self):
        if self.n_x < 2 or self.n_v < 2:
            raise ValueError("grid needs at least two cells per axis")
        if self.length_x <= 0.0:
            raise ValueError("length_x must be positive")
        if self.v_max < 2.0:
            raise ValueError("v_max must be at least 2 so the unit ball is interior")
        if self.dt <= 0.0 or self.window <= 0.0:
            raise ValueError("dt and window must be positive")

    @property
    def dx(self):
        return self.length_x / self.n_x

    @property
    def dv(self):
        return 2.0 * self.v_max / self.n_v

    @property
    def x(self):
        x0 = -0.5 * self.length_x if self.wall_x else 0.0
        return x0 + (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def v(self):
        return -self.v_max + (np.arange(self.n_v) + 0.5) * self.dv

    @property
    def cell_measure(self):
        return self.dx * self.dv

    def ball_mask(self):
        """Cells whose centre lies in the unit velocity ball |v| <= 1."""
        return np.abs(self.v) <= 1.0

    def refined(self, k=1):
        """Grid with all mesh widths halved k times (same window)."""
        return Grid(
            n_x=self.n_x * 2**k,
            length_x=self.length_x,
            n_v=self.n_v * 2**k,
            v_max=self.v_max,
            dt=self.dt / 2**k,
            window=self.window,
            wall_x=self.wall_x,
        )


@dataclass(frozen=True)
class PhaseField:
    """Scalar field on the (x, v) grid; values has shape (n_x, n_v)."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape != (self.grid.n_x, self.grid.n_v):
            raise DimensionMismatch(
                f"field shape {self.values.shape} does not match grid "
                f"({self.grid.n_x}, {self.grid.n_v})"
            )

    def mass(self):
        return float(self.values.sum()) * self.grid.cell_measure

    def __add__(self, other):
        _check_same_grid(self, other)
        return PhaseField(self.values + other.values, self.grid)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return PhaseField(self.values - other.values, self.grid)

    def __mul__(self, scalar):
        return PhaseField(self.values * float(scalar), self.grid)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpatialField:
    """Scalar field over x only, or over (t, x) for slab quantities."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.values.shape[-1] != self.grid.n_x:
            raise DimensionMismatch(
                f"spatial field last axis {self.values.shape[-1]} != n_x {self.grid.n_x}"
            )


def _check_same_grid(a, b):
    if a.grid is not b.grid and a.grid != b.grid:
        raise DimensionMismatch("fields live on different grids")


def local_density(f):
    """Velocity integral of f per position cell (midpoint rule)."""
    return SpatialField(f.values.sum(axis=1) * f.grid.dv, f.grid)


def d_dx(arr, dx, wall):
    """Second-order first derivative along the last axis.

    Periodic wrap by default; one-sided second-order stencils at walls.
    """
    if wall:
        return np.gradient(arr, dx, axis=-1, edge_order=2)
    return (np.roll(arr, -1, axis=-1) - np.roll(arr, 1, axis=-1)) / (2.0 * dx)


def _check_weight(values, f_stat):
    bad = (f_stat < WEIGHT_FLOOR) & (np.abs(values) > 0.0)
    if bad.any():
        raise DegenerateWeight(
            f"{int(bad.sum())} cells have weight below {WEIGHT_FLOOR:g} "
            "where the field is nonzero"
        )


def weighted_dot(f, g, f_stat):
    """Inner product sum f g / f_stat over phase space."""
    _check_same_grid(f, g)
    _check_same_grid(f, f_stat)
    _check_weight(f.values, f_stat.values)
    _check_weight(g.values, f_stat.values)
    denom = np.maximum(f_stat.values, WEIGHT_FLOOR)
    return float((f.values * g.values / denom).sum()) * f.grid.cell_measure


def weighted_norm_sq(f, f_stat):
    """Squared 1/f_stat-weighted L2 norm; zero only for the zero field."""
    _check_same_grid(f, f_stat)
    _check_weight(f.values, f_stat.values)
    denom = np.maximum(f_stat.values, WEIGHT_FLOOR)
    return float((f.values * f.values / denom).sum()) * f.grid.cell_measure


def weighted_norm_sq_spacetime(fields, f_stat, dt=None):
    """Trapezoid-in-time sum of weighted_norm_sq over a snapshot sequence."""
    fields = list(fields)
    if not fields:
        return 0.0
    if dt is None:
        dt = fields[0].grid.dt
    norms = np.array([weighted_norm_sq(f, f_stat) for f in fields])
    if len(norms) == 1:
        return float(norms[0]) * dt
    weights = np.full(len(norms), dt)
    weights[0] = weights[-1] = 0.5 * dt
    return float(norms @ weights)


def write_field(path, f):
    """Flat binary snapshot: 48-byte header followed by row-major doubles."""
    g = f.grid
    header = _MAGIC + struct.pack(
        "<qqqdd", _VERSION, g.n_x, g.n_v, g.length_x, g.v_max
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path, grid=None):
    """Read a binary snapshot written by write_field.

    If grid is omitted a minimal grid is reconstructed from the header
    (dt and window are not stored and default to 1).
    """
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        version, n_x, n_v, length_x, v_max = struct.unpack("<qqqdd", fh.read(40))
        if version != _VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(8 * n_x * n_v), dtype="<f8").reshape(n_x, n_v)
    if grid is None:
        grid = Grid(n_x=n_x, length_x=length_x, n_v=n_v, v_max=v_max, dt=1.0, window=1.0)
    elif (grid.n_x, grid.n_v) != (n_x, n_v):
        raise DimensionMismatch("snapshot dimensions do not match the given grid")
    return PhaseField(np.array(data), grid)


def field_to_csv(path, f):
    """CSV export with one row per cell: x, v, value."""
    g = f.grid
    with open(path, "w", newline="") as fh:
        fh.write("x,v,value\n")
        for i, xi in enumerate(g.x):
            for j, vj in enumerate(g.v):
                fh.write(f"{xi:.17g},{vj:.17g},{f.values[i, j]:.17g}\n")


def write_plane(path, values, extent0, extent1):
    """Binary export of a generic 2D plane in the snapshot layout.

    Same header structure as write_field, with the two count fields
    holding the plane shape and the two float fields its extents; used
    for space-time data such as the divergence-solver components.
    """
    values = np.asarray(values, dtype=float)
    header = _MAGIC + struct.pack(
        "<qqqdd", _VERSION, values.shape[0], values.shape[1],
        float(extent0), float(extent1),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_plane(path):
    """Read a plane written by write_plane: (values, extent0, extent1)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        version, n0, n1, e0, e1 = struct.unpack("<qqqdd", fh.read(40))
        if version != _VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(8 * n0 * n1), dtype="<f8").reshape(n0, n1)
    return np.array(data), e0, e1
