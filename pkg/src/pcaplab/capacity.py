"""Elliptic and parabolic p-capacities on lattice domains.

The elliptic p-capacity of a condenser K inside a window Omega is the
minimum of the discrete p-Dirichlet energy

    sum_cells h**n * (q_cell)**(p/2)

over lattice functions with phi = 1 on K and phi = 0 outside Omega, where
q_cell averages the squared forward edge differences of phi over each cell
(see stencil).  The minimizer is computed by preconditioned descent: each
sweep solves the linear problem with gradient-lagged weights, which
majorizes the energy for p < 2, and then line-searches the true energy along
the resulting direction.  The reported value is always the unsmoothed
energy; the epsilon regularizer enters only the solver internals.

The parabolic capacity of a time-sliced condenser in Omega x (t1, t2) is the
midpoint-rule time integral of the slice capacities.  The capacity density
delta(rho) compares the condenser K_rho(x) \\ E against the full cube
K_rho(x), both relative to the window K_{3 rho/2}(x); it is the
normalization-free thickness measure driving the Wiener-type integrals.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from . import stencil
from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    ResolutionError,
)
from .geometry import Cube, rasterize_cube_difference, scale_domain

_DIRECT_SOLVE_MAX = 15000


@dataclass
class CapacityProblem:
    """Condenser node set, window (Cube or node mask), exponent, and lattice."""

    condenser_inner: np.ndarray
    window: object
    p: float
    domain: object

    def window_mask(self):
        if isinstance(self.window, Cube):
            return self.domain.cube_mask(self.window, closed=False)
        return np.asarray(self.window, dtype=bool)


@dataclass
class CapacityResult:
    value: float
    potential: np.ndarray
    iterations: int
    residual: float


@dataclass
class ParabolicCondenser:
    """Time-indexed condenser slices in a window over (t1, t2)."""

    slices: list
    window: object
    t1: float
    t2: float
    p: float
    domain: object

    def __post_init__(self):
        if self.t2 <= self.t1:
            raise InvalidArgumentError("need t1 < t2")
        if len(self.slices) == 0:
            raise InvalidArgumentError("need at least one slice")


def _dilate(mask, steps):
    out = mask.copy()
    for _ in range(steps):
        grown = out.copy()
        for a in range(mask.ndim):
            lo = [slice(None)] * mask.ndim
            hi = [slice(None)] * mask.ndim
            lo[a] = slice(None, -1)
            hi[a] = slice(1, None)
            grown[tuple(lo)] |= out[tuple(hi)]
            grown[tuple(hi)] |= out[tuple(lo)]
        out = grown
    return out


def _subbox(mask, margin):
    idx = np.nonzero(mask)
    slices = []
    for a, ix in enumerate(idx):
        lo = max(int(ix.min()) - margin, 0)
        hi = min(int(ix.max()) + margin + 1, mask.shape[a])
        slices.append(slice(lo, hi))
    return tuple(slices)


class _EnergyModel:
    """Smoothed p-Dirichlet energy on a subarray with clamped nodes."""

    def __init__(self, free, h, p, eps):
        self.free = free
        self.h = h
        self.p = p
        self.eps2 = eps * eps
        self.shape = free.shape
        self.nfree = int(free.sum())
        self.free_flat = np.flatnonzero(free.ravel())
        self.strides = stencil.flat_strides(free.shape)
        self.to_free = -np.ones(free.size, dtype=np.int64)
        self.to_free[self.free_flat] = np.arange(self.nfree)
        self._warm = None

    def smoothed_energy(self, u):
        return stencil.energy(u, self.h, self.p, eps=np.sqrt(self.eps2))

    def true_energy(self, u):
        return stencil.energy(u, self.h, self.p, eps=0.0)

    def sweep(self, u, p_override=None):
        """Solve the weighted linear problem; returns the proposed iterate."""
        p = self.p if p_override is None else p_override
        q = stencil.cell_grad_square(stencil.axis_diffs(u, self.h))
        w = (q + self.eps2) ** (p / 2.0 - 1.0)
        rows, cols, wts = stencil.edge_weight_lists(w, self.shape, self.strides)

        flat_free = self.free.ravel()
        fr = flat_free[rows]
        fc = flat_free[cols]
        r_id = self.to_free[rows]
        c_id = self.to_free[cols]
        uflat = u.ravel()

        diag = np.zeros(self.nfree)
        np.add.at(diag, r_id[fr], wts[fr])
        np.add.at(diag, c_id[fc], wts[fc])
        rhs = np.zeros(self.nfree)
        mix = fr & ~fc
        np.add.at(rhs, r_id[mix], wts[mix] * uflat[cols[mix]])
        mix = fc & ~fr
        np.add.at(rhs, c_id[mix], wts[mix] * uflat[rows[mix]])

        both = fr & fc
        A = sp.coo_matrix(
            (
                np.concatenate([diag, -wts[both], -wts[both]]),
                (
                    np.concatenate([np.arange(self.nfree), r_id[both], c_id[both]]),
                    np.concatenate([np.arange(self.nfree), c_id[both], r_id[both]]),
                ),
            ),
            shape=(self.nfree, self.nfree),
        ).tocsr()

        if self.nfree <= _DIRECT_SOLVE_MAX:
            x = spla.spsolve(A.tocsc(), rhs)
        else:
            d = A.diagonal()
            M = sp.diags(1.0 / np.where(d > 0, d, 1.0))
            x0 = self._warm if self._warm is not None else uflat[self.free_flat]
            x, info = spla.cg(A, rhs, x0=x0, rtol=1e-12, atol=0.0, maxiter=20000, M=M)
            if info != 0:
                x = spla.spsolve(A.tocsc(), rhs)
            self._warm = x
        out = u.copy()
        out.ravel()[self.free_flat] = x
        return out

    def line_search(self, u, d):
        """Minimize the smoothed energy along u + t*d for t in [0, 1.5]."""
        du = stencil.axis_diffs(u, self.h)
        dd = stencil.axis_diffs(d, self.h)
        q0 = stencil.cell_bilinear(du, du)
        c1 = stencil.cell_bilinear(du, dd)
        c2 = stencil.cell_bilinear(dd, dd)
        hn = self.h ** u.ndim
        pw = self.p / 2.0

        def energy_at(t):
            q = q0 + 2.0 * t * c1 + t * t * c2
            return hn * float(np.sum((q + self.eps2) ** pw))

        res = minimize_scalar(
            energy_at, bounds=(0.0, 1.5), method="bounded", options={"xatol": 1e-12}
        )
        t = float(res.x)
        # The unit step descends by majorization; keep whichever is better.
        if energy_at(1.0) < energy_at(t):
            t = 1.0
        return t, energy_at(t)


def p_capacity(problem, tol=1e-10, max_iter=100000, min_gap_cells=2):
    """Discrete elliptic p-capacity of a condenser, with its potential.

    Raises ResolutionError when the condenser gap is thinner than
    min_gap_cells lattice cells and ConvergenceError when the energy has not
    stagnated (relative decrease per sweep below tol) within max_iter sweeps.
    """
    if not (problem.p > 1.0):
        raise InvalidArgumentError("capacity needs p > 1")
    domain = problem.domain
    inner = np.asarray(problem.condenser_inner, dtype=bool)
    if inner.shape != domain.shape:
        raise InvalidArgumentError("condenser mask shape mismatch")
    window = problem.window_mask()
    if not window.any():
        raise InvalidArgumentError("window resolves to no lattice nodes")
    if inner.any() and not (inner <= window).all():
        raise InvalidArgumentError("condenser must lie inside the window")
    potential = np.zeros(domain.shape)
    if not inner.any():
        return CapacityResult(0.0, potential, 0, 0.0)
    if not (_dilate(inner, min_gap_cells) <= window).all():
        raise ResolutionError(
            f"condenser gap is not resolved by >= {min_gap_cells} cells"
        )

    box = _subbox(window, margin=1)
    free = window[box] & ~inner[box]
    u = np.where(inner[box], 1.0, 0.0)

    edge_cells = max(s.stop - s.start for s in box)
    eps = 1e-8 * edge_cells
    model = _EnergyModel(free, domain.h, problem.p, eps)

    # p = 2 harmonic fill-in as the starting guess
    u = model.sweep(u, p_override=2.0)

    energy = model.smoothed_energy(u)
    rel = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        proposal = model.sweep(u)
        d = proposal - u
        t, e_new = model.line_search(u, d)
        u = u + t * d
        rel = (energy - e_new) / max(abs(e_new), 1e-300)
        energy = e_new
        if rel < tol:
            break
    else:
        raise ConvergenceError(
            f"capacity minimization did not stagnate in {max_iter} sweeps",
            residual=rel,
        )

    np.clip(u, 0.0, 1.0, out=u)
    potential[box] = u
    return CapacityResult(model.true_energy(u), potential, iterations, float(rel))


def capacity_scaling_check(problem, s, refine=1, **kwargs):
    """Capacity at scale 1 and at scale s; the ratio should be s**(n-p)."""
    v1 = p_capacity(problem, **kwargs).value
    scaled_domain = scale_domain(problem.domain, s, refine=refine)
    inner = problem.condenser_inner
    window = problem.window
    if isinstance(window, Cube):
        window = window.scaled(float(s))
    if refine > 1:
        idx = [
            np.minimum((np.arange(refine * (m - 1) + 1) + refine // 2) // refine, m - 1)
            for m in problem.domain.shape
        ]
        inner = np.asarray(inner, bool)[np.ix_(*idx)]
        if not isinstance(window, Cube):
            window = np.asarray(window, bool)[np.ix_(*idx)]
    scaled = CapacityProblem(inner, window, problem.p, scaled_domain)
    v2 = p_capacity(scaled, **kwargs).value
    return v1, v2


def parabolic_capacity(cond, **kwargs):
    """Midpoint-rule time integral of slice capacities over (t1, t2)."""
    window = cond.window
    wmask = (
        cond.domain.cube_mask(window, closed=False)
        if isinstance(window, Cube)
        else np.asarray(window, bool)
    )
    dt = (cond.t2 - cond.t1) / len(cond.slices)
    total = 0.0
    cache = {}
    for mask in cond.slices:
        mask = np.asarray(mask, dtype=bool)
        if mask.any() and not (mask <= wmask).all():
            raise InvalidArgumentError("every slice must lie inside the window")
        key = mask.tobytes()
        if key not in cache:
            cache[key] = p_capacity(
                CapacityProblem(mask, window, cond.p, cond.domain), **kwargs
            ).value
        total += cache[key] * dt
    return total


def capacity_density(E, x_o, rho, p, return_parts=False, **kwargs):
    """Relative capacity delta(rho) of the complement of E at x_o.

    delta = cap_p(K_rho(x_o) \\ E, K_{1.5 rho}(x_o)) /
            cap_p(K_rho(x_o),      K_{1.5 rho}(x_o)),  clipped to [0, 1].
    """
    if rho <= 0:
        raise InvalidArgumentError("rho must be positive")
    if rho / E.h < 8.0 * (1 - 1e-12):
        raise ResolutionError("need at least 8 lattice cells across rho")
    window = Cube(x_o, 1.5 * rho)
    if not E.contains_cube(window):
        raise ResolutionError("window K_{3 rho/2} exceeds the bounding box")
    inner_full = E.cube_mask(Cube(x_o, rho), closed=True)
    inner_diff = rasterize_cube_difference(Cube(x_o, rho), E)
    if not inner_diff.any():
        return (0.0, 0.0, None) if return_parts else 0.0
    if (inner_diff == inner_full).all():
        if not return_parts:
            return 1.0
        den = p_capacity(CapacityProblem(inner_full, window, p, E), **kwargs).value
        return 1.0, den, den
    num = p_capacity(CapacityProblem(inner_diff, window, p, E), **kwargs).value
    den = p_capacity(CapacityProblem(inner_full, window, p, E), **kwargs).value
    delta = min(max(num / den, 0.0), 1.0)
    if return_parts:
        return delta, num, den
    return delta


@dataclass
class FatnessReport:
    is_fat: bool
    gamma_o: float
    rho_o: float
    evidence: list  # rows of (point, scale, ratio)


def is_uniformly_p_fat(E, gamma_o, rho_o, p, k_max=None, max_points=32, **kwargs):
    """Test the complement of E for a uniform capacity-density lower bound.

    Scans boundary points (complement nodes face-adjacent to E) over dyadic
    scales rho_o / 2**k and reports every computed (point, scale, ratio).
    """
    if not (0 < gamma_o <= 1):
        raise InvalidArgumentError("gamma_o must lie in (0, 1]")
    floor = int(np.floor(np.log2(rho_o / (8.0 * E.h)) + 1e-12))
    if floor < 0:
        raise ResolutionError("rho_o is below the lattice resolution floor")
    k_top = floor if k_max is None else min(int(k_max), floor)
    scales = [rho_o / 2.0**k for k in range(k_top + 1)]

    bmask = E.complement_boundary_nodes()
    pts = E.node_coordinates(bmask)
    keep = [
        i
        for i in range(len(pts))
        if E.contains_cube(Cube(tuple(pts[i]), 1.5 * scales[0]))
    ]
    if not keep:
        raise ResolutionError("no boundary point admits the largest window")
    if max_points is not None and len(keep) > max_points:
        stride = len(keep) / max_points
        keep = [keep[int(i * stride)] for i in range(max_points)]

    evidence = []
    ok = True
    for i in keep:
        point = tuple(float(v) for v in pts[i])
        for rho in scales:
            ratio = capacity_density(E, point, rho, p, **kwargs)
            evidence.append((point, rho, ratio))
            if ratio < gamma_o:
                ok = False
    return FatnessReport(ok, float(gamma_o), float(rho_o), evidence)


def geometric_density(E, x_o, rho, alpha_star, return_fraction=False):
    """Cell-counting check |E ∩ K_rho(x_o)| <= (1 - alpha_star)|K_rho(x_o)|."""
    cube_nodes = E.cube_mask(Cube(x_o, rho), closed=True)
    total = int(cube_nodes.sum())
    if total == 0:
        raise InvalidArgumentError("cube contains no lattice nodes")
    frac = float((cube_nodes & E.inside).sum()) / total
    ok = frac <= (1.0 - alpha_star) + 1e-12
    if return_fraction:
        return ok, frac
    return ok
