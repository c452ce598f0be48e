"""Cubes, intrinsically scaled space-time cylinders, and rasterized domains.

A space cube K_rho(y) has edge 2*rho and axis-parallel faces.  Cylinders pair
a cube with a time interval whose length is theta * rho**p, the natural time
scaling for diffusion with gradient exponent p.  Open sets are stored as
boolean indicators on uniform node lattices: a node belongs to the set iff
its coordinates satisfy the set's analytic description, with no
anti-aliasing, so every construction is deterministic.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, GeometryError

CYLINDER_KINDS = ("forward", "backward", "centered")

_COORD_TOL = 1e-9


@dataclass(frozen=True)
class Cube:
    """Axis-parallel cube: center and half-edge rho (edge is 2*rho)."""

    center: tuple
    half_edge: float

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_edge", float(self.half_edge))
        if not all(math.isfinite(c) for c in center):
            raise InvalidArgumentError("cube center must be finite")
        if not (self.half_edge > 0 and math.isfinite(self.half_edge)):
            raise InvalidArgumentError("cube half_edge must be positive")

    @property
    def n(self):
        return len(self.center)

    def scaled(self, s, about_origin=True):
        if about_origin:
            return Cube(tuple(s * c for c in self.center), s * self.half_edge)
        return Cube(self.center, s * self.half_edge)

    def contains_point(self, x, closed=True):
        d = max(abs(float(a) - c) for a, c in zip(np.atleast_1d(x), self.center))
        if closed:
            return d <= self.half_edge + _COORD_TOL * self.half_edge
        return d < self.half_edge - _COORD_TOL * self.half_edge

    def contains_cube(self, other):
        d = max(abs(a - c) for a, c in zip(other.center, self.center))
        return d + other.half_edge <= self.half_edge * (1 + _COORD_TOL)


@dataclass(frozen=True)
class Cylinder:
    """Cube paired with a time interval of intrinsic length theta * rho**p.

    kind is "forward" (s, s + theta2 rho^p], "backward" (s - theta1 rho^p, s],
    or "centered" (s - theta1 rho^p, s + theta2 rho^p].
    """

    base: Cube
    t_ref: float
    theta1: float
    theta2: float
    kind: str
    p: float

    def __post_init__(self):
        if self.kind not in CYLINDER_KINDS:
            raise InvalidArgumentError(f"unknown cylinder kind {self.kind!r}")
        if self.theta1 < 0 or self.theta2 < 0:
            raise InvalidArgumentError("time coefficients must be nonnegative")
        if self.kind == "forward" and not (self.theta1 == 0 and self.theta2 > 0):
            raise InvalidArgumentError("forward cylinder needs theta1 == 0 < theta2")
        if self.kind == "backward" and not (self.theta2 == 0 and self.theta1 > 0):
            raise InvalidArgumentError("backward cylinder needs theta2 == 0 < theta1")
        if self.kind == "centered" and not (self.theta1 > 0 and self.theta2 > 0):
            raise InvalidArgumentError("centered cylinder needs theta1, theta2 > 0")

    # Both ends evaluate theta * rho**p in this one place and in this exact
    # order, so the rho**p time law is bit-reproducible.
    @property
    def t_lo(self):
        return self.t_ref - self.theta1 * self.base.half_edge**self.p

    @property
    def t_hi(self):
        return self.t_ref + self.theta2 * self.base.half_edge**self.p

    @property
    def time_extent(self):
        return (self.theta1 + self.theta2) * self.base.half_edge**self.p

    def contains_cylinder(self, other):
        return (
            self.base.contains_cube(other.base)
            and self.t_lo <= other.t_lo
            and other.t_hi <= self.t_hi
        )


def make_cylinder(base, s, theta1, theta2, kind, p):
    """Build a cylinder over `base`, validating the kind/theta combination."""
    if not (p > 0 and math.isfinite(p)):
        raise InvalidArgumentError("p must be positive")
    return Cylinder(base, float(s), float(theta1), float(theta2), kind, float(p))


def nested_cylinders(x_o, t_o, R_o, omegas, c, p):
    """Dyadically shrinking centered cylinders driven by oscillation values.

    Step j (j = 1..len(omegas)) uses r_j = R_o / 2**j and the previous
    oscillation value:

        K_{2 r_j}(x_o) x [t_o - (c/4) w_{j-1}^{2-p} 2 (2 r_j)^p,
                          t_o + (c/4) w_{j-1}^{2-p} (2 r_j)^p]

    For positive nonincreasing omegas each cylinder contains the next.
    """
    om = np.asarray(omegas, dtype=float)
    if om.ndim != 1 or om.size == 0:
        raise InvalidArgumentError("omegas must be a nonempty sequence")
    if np.any(om <= 0):
        raise InvalidArgumentError("oscillation values must be positive")
    if np.any(np.diff(om) > 0):
        raise InvalidArgumentError("oscillation values must be nonincreasing")
    if not (R_o > 0):
        raise InvalidArgumentError("R_o must be positive")
    out = []
    for j in range(1, om.size + 1):
        r_j = R_o / 2.0**j
        theta2 = 0.25 * c * om[j - 1] ** (2.0 - p)
        cube = Cube(x_o, 2.0 * r_j)
        out.append(make_cylinder(cube, t_o, 2.0 * theta2, theta2, "centered", p))
    return out


@dataclass
class StructuralData:
    """Gradient exponent, dimension, ellipticity box, and Lipschitz constant.

    lam = n*(p-2) + p is the intrinsic space-time scaling exponent; it is
    positive exactly on the supercritical range 2n/(n+1) < p < 2 that the
    Harnack-type measurements require.  Capacity-only work needs 1 < p < 2.
    """

    p: float
    n: int
    c0: float = 1.0
    c1: float = 1.0
    lip: float = 0.0

    def __post_init__(self):
        if not (1.0 < self.p < 2.0):
            raise InvalidArgumentError("p must lie in (1, 2)")
        if self.n not in (1, 2, 3):
            raise InvalidArgumentError("supported dimensions are 1, 2, 3")
        if not (0 < self.c0 <= self.c1):
            raise InvalidArgumentError("need 0 < c0 <= c1")
        if self.lip < 0:
            raise InvalidArgumentError("Lipschitz constant must be >= 0")

    @property
    def lam(self):
        return self.n * (self.p - 2.0) + self.p

    @property
    def supercritical(self):
        return self.p > 2.0 * self.n / (self.n + 1.0)

    def require_supercritical(self):
        if not self.supercritical:
            raise InvalidArgumentError(
                f"p={self.p} is not in the supercritical range "
                f"({2 * self.n / (self.n + 1):.4f}, 2) for n={self.n}"
            )


class GridDomain:
    """Open set rasterized on a uniform node lattice inside a bounding cube.

    Nodes sit at center - L + i*h along each axis (L the bounding half-edge),
    including the faces; inside-marked nodes must stay strictly off the faces.
    """

    def __init__(self, n, h, bounding_box, inside, meta=None):
        self.n = int(n)
        self.h = float(h)
        self.bounding_box = bounding_box
        self.inside = np.asarray(inside, dtype=bool)
        self.meta = dict(meta) if meta else {}
        if self.n not in (1, 2, 3):
            raise InvalidArgumentError("supported dimensions are 1, 2, 3")
        if not (self.h > 0):
            raise InvalidArgumentError("lattice spacing must be positive")
        if bounding_box.n != self.n:
            raise InvalidArgumentError("bounding box dimension mismatch")
        m = 2.0 * bounding_box.half_edge / self.h
        if abs(m - round(m)) > 1e-9:
            raise InvalidArgumentError("bounding box edge must be a multiple of h")
        expect = (int(round(m)) + 1,) * self.n
        if self.inside.shape != expect:
            raise InvalidArgumentError(
                f"inside array shape {self.inside.shape} != lattice shape {expect}"
            )
        for a in range(self.n):
            face = [slice(None)] * self.n
            for idx in (0, -1):
                face[a] = idx
                if self.inside[tuple(face)].any():
                    raise InvalidArgumentError(
                        "inside nodes must be strictly within the bounding box"
                    )

    @property
    def shape(self):
        return self.inside.shape

    def coords(self, axis):
        c = self.bounding_box.center[axis]
        L = self.bounding_box.half_edge
        return c - L + self.h * np.arange(self.shape[axis])

    def node_coordinates(self, mask=None):
        """Coordinates of (masked) nodes as an (m, n) array, C-order."""
        axes = [self.coords(a) for a in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        if mask is None:
            return pts
        return pts[np.asarray(mask, bool).ravel()]

    def _axis_range(self, axis, lo, hi, closed=True):
        x0 = self.coords(axis)[0]
        tol = _COORD_TOL * max(1.0, abs(lo), abs(hi)) + _COORD_TOL * self.h
        if closed:
            i0 = int(np.ceil((lo - x0 - tol) / self.h))
            i1 = int(np.floor((hi - x0 + tol) / self.h))
        else:
            i0 = int(np.floor((lo - x0 + tol) / self.h)) + 1
            i1 = int(np.ceil((hi - x0 - tol) / self.h)) - 1
        return max(i0, 0), min(i1, self.shape[axis] - 1)

    def cube_mask(self, cube, closed=True):
        """Boolean node mask of a cube (clipped to the lattice)."""
        mask = np.zeros(self.shape, dtype=bool)
        ranges = []
        for a in range(self.n):
            lo = cube.center[a] - cube.half_edge
            hi = cube.center[a] + cube.half_edge
            i0, i1 = self._axis_range(a, lo, hi, closed=closed)
            if i1 < i0:
                return mask
            ranges.append(np.arange(i0, i1 + 1))
        mask[np.ix_(*ranges)] = True
        return mask

    def ball_mask(self, center, radius, closed=True, cover="center"):
        """Nodes of a ball: cell-center rule, or the outer cell cover.

        cover="outer" keeps every node whose cell (the h/2 cube around it)
        meets the closed ball; that is the minimal lattice neighborhood of
        the compact ball, the natural condenser rasterization for capacity
        constraints that hold on a neighborhood of the compact set.
        """
        d2 = np.zeros(self.shape)
        for a in range(self.n):
            x = np.abs(self.coords(a) - float(np.atleast_1d(center)[a]))
            if cover == "outer":
                x = np.maximum(x - self.h / 2.0, 0.0)
            shp = [1] * self.n
            shp[a] = -1
            d2 = d2 + (x**2).reshape(shp)
        r2 = float(radius) ** 2
        tol = 2.0 * _COORD_TOL * r2 + _COORD_TOL * self.h**2
        return d2 <= r2 + tol if closed else d2 < r2 - tol

    def contains_cube(self, cube):
        return self.bounding_box.contains_cube(cube)

    def complement_boundary_nodes(self):
        """Complement nodes with a face neighbor inside the set."""
        near = np.zeros(self.shape, dtype=bool)
        for a in range(self.n):
            lo = [slice(None)] * self.n
            hi = [slice(None)] * self.n
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            near[tuple(lo)] |= self.inside[tuple(hi)]
            near[tuple(hi)] |= self.inside[tuple(lo)]
        return near & ~self.inside

    def copy(self, inside=None, meta=None):
        return GridDomain(
            self.n,
            self.h,
            self.bounding_box,
            self.inside.copy() if inside is None else inside,
            self.meta if meta is None else meta,
        )


def scale_domain(domain, s, refine=1):
    """Similarity-scale a domain by s > 0, optionally refining the lattice.

    With refine == 1 geometry is multiplied by s and the indicator is reused
    node-for-node.  With an integer refine > 1 the lattice spacing becomes
    s*h/refine and the indicator is upsampled by nearest node, so refine == s
    (a power of 2) reproduces the original physical resolution.
    """
    if not (np.isscalar(s) and math.isfinite(s) and s > 0):
        raise InvalidArgumentError("scale factor must be positive and finite")
    if not (isinstance(refine, (int, np.integer)) and refine >= 1):
        raise InvalidArgumentError("refine must be a positive integer")
    bbox = domain.bounding_box.scaled(float(s))
    inside = domain.inside
    if refine > 1:
        idx = [
            np.minimum((np.arange(refine * (m - 1) + 1) + refine // 2) // refine, m - 1)
            for m in domain.shape
        ]
        inside = inside[np.ix_(*idx)]
    meta = dict(domain.meta)
    if "probe" in meta:
        meta["probe"] = [float(s) * v for v in meta["probe"]]
    return GridDomain(domain.n, float(s) * domain.h / refine, bbox, inside, meta)


def rasterize_cube_difference(K, E):
    """Nodes of the closed cube K that are not marked inside E."""
    if not E.contains_cube(K):
        raise GeometryError("cube K must lie within the domain bounding box")
    return E.cube_mask(K, closed=True) & ~E.inside


BENCHMARK_NAMES = (
    "full_cube",
    "half_space",
    "square_with_corner",
    "slit",
    "power_cusp",
    "exponential_cusp",
    "checker_fat",
)


def benchmark_domain(name, n=2, h=1.0 / 64, half=0.5, margin=0.5, **params):
    """Rasterize one of the named benchmark geometries.

    Each domain records in .meta whether its complement is uniformly p-fat by
    construction, whether the positive geometric density condition holds, and
    a canonical probe point on the boundary feature of interest.  Lattices are
    offset by h/2 where a feature must not sit on a node row (thin cusps), and
    aligned where it must (the slit).
    """
    if name not in BENCHMARK_NAMES:
        raise InvalidArgumentError(f"unknown benchmark domain {name!r}")
    L = half + margin
    if abs(L / h - round(L / h)) > 1e-9:
        raise InvalidArgumentError("half + margin must be a multiple of h")

    if name in ("square_with_corner", "slit", "power_cusp", "exponential_cusp"):
        if name == "slit" and n != 2:
            raise InvalidArgumentError("slit is two-dimensional")
        if n not in (2, 3) or (name == "square_with_corner" and n not in (2, 3)):
            raise InvalidArgumentError(f"{name} needs n in (2, 3)")

    offs = [0.0] * n
    if name == "half_space":
        offs[0] = h / 2
    elif name in ("square_with_corner", "power_cusp", "exponential_cusp", "checker_fat"):
        offs = [h / 2] * n
    elif name == "slit":
        offs = [h / 2, 0.0]

    bbox = Cube(tuple(offs), L)
    axes = [offs[a] - L + h * np.arange(int(round(2 * L / h)) + 1) for a in range(n)]
    X = np.meshgrid(*axes, indexing="ij")
    box = np.ones(X[0].shape, dtype=bool)
    for g in X:
        box &= np.abs(g) < half
    guard = np.ones_like(box)
    for g in X:
        guard &= np.abs(g) < L - 0.51 * h

    probe = [0.0] * n
    fat, density = True, True
    if name == "full_cube":
        inside = box
        probe[0] = half
    elif name == "half_space":
        inside = box & (X[0] < 0)
    elif name == "square_with_corner":
        orthant = X[0] >= 0
        for g in X[1:]:
            orthant &= g <= 0
        inside = box & ~orthant
    elif name == "slit":
        inside = box & ~((np.abs(X[1]) < h / 4) & (X[0] >= 0))
        density = False
    elif name == "power_cusp":
        k = float(params.get("exponent", 1.0))
        a = float(params.get("slope", 1.0))
        if k <= 0 or a <= 0:
            raise InvalidArgumentError("power_cusp needs positive exponent and slope")
        perp = np.abs(X[1]) if n == 2 else np.sqrt(X[1] ** 2 + X[2] ** 2)
        with np.errstate(invalid="ignore"):
            spike = (X[0] >= 0) & (perp <= a * np.maximum(X[0], 0.0) ** k)
        inside = box & ~spike
        fat, density = k <= 1.0, k < 1.0
    elif name == "exponential_cusp":
        kappa = float(params.get("kappa", 0.3))
        if kappa <= 0:
            raise InvalidArgumentError("exponential_cusp needs kappa > 0")
        perp = np.abs(X[1]) if n == 2 else np.sqrt(X[1] ** 2 + X[2] ** 2)
        with np.errstate(divide="ignore", over="ignore"):
            width = np.where(X[0] > 0, np.exp(-kappa / np.maximum(X[0], 1e-300)), 0.0)
        spike = (X[0] > 0) & (perp <= width)
        inside = box & ~spike
        fat, density = False, False
    else:  # checker_fat
        cell = float(params.get("cell", 0.125))
        if cell <= 0:
            raise InvalidArgumentError("checker_fat needs cell > 0")
        parity = np.zeros(X[0].shape, dtype=int)
        for g in X:
            parity += np.floor(g / cell).astype(int)
        inside = box & (parity % 2 == 0)

    meta = {
        "name": name,
        "probe": probe,
        "p_fat_by_construction": fat,
        "positive_geometric_density": density,
        "params": {k: float(v) for k, v in params.items()},
    }
    return GridDomain(n, h, bbox, inside & guard, meta)


def _rle_encode(bits):
    flat = np.asarray(bits, bool).ravel()
    if flat.size == 0:
        return "0:"
    changes = np.flatnonzero(np.diff(flat.view(np.int8))) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds)
    return f"{int(flat[0])}:" + ",".join(str(int(r)) for r in runs)


def _rle_decode(text, size):
    first, _, rest = text.partition(":")
    out = np.empty(size, dtype=bool)
    val = bool(int(first))
    pos = 0
    if rest:
        for tok in rest.split(","):
            r = int(tok)
            out[pos : pos + r] = val
            pos += r
            val = not val
    if pos != size:
        raise InvalidArgumentError("run-length data does not match lattice size")
    return out


def domain_to_json(domain):
    return {
        "n": domain.n,
        "h": domain.h,
        "bbox": {
            "center": list(domain.bounding_box.center),
            "half_edge": domain.bounding_box.half_edge,
        },
        "shape": list(domain.shape),
        "inside": _rle_encode(domain.inside),
        "meta": domain.meta,
    }


def domain_from_json(data):
    bbox = Cube(tuple(data["bbox"]["center"]), data["bbox"]["half_edge"])
    shape = tuple(int(s) for s in data["shape"])
    inside = _rle_decode(data["inside"], int(np.prod(shape))).reshape(shape)
    return GridDomain(int(data["n"]), float(data["h"]), bbox, inside, data.get("meta"))


def save_domain(domain, path):
    with open(path, "w") as fh:
        json.dump(domain_to_json(domain), fh, sort_keys=True)
        fh.write("\n")


def load_domain(path):
    with open(path) as fh:
        return domain_from_json(json.load(fh))
