"""Edge-difference cell calculus on uniform lattices.

The discrete gradient is built from forward differences on cell edges: for a
cell (the h-cube spanned by 2**n nodes) the squared gradient is

    q_cell = sum_axes  mean over the cell's 2**(n-1) parallel edges
             of ((u_head - u_tail) / h)**2

which samples |grad u|**2 at the cell center to second order.  Every edge
difference enters individually, so truncating u contracts q cellwise (the
basis of the discrete maximum principle) and no checkerboard mode is energy
free.  The p-energy is sum_cells h**n (q_cell)**(p/2); its u-gradient is a
weighted graph divergence assembled by the same slicing.
"""

import numpy as np


def axis_diffs(u, h):
    """Forward differences along each axis, divided by h.

    Entry a has the full shape except axis a shortened by one: element i is
    (u[i + e_a] - u[i]) / h, one value per lattice edge parallel to axis a.
    """
    n = u.ndim
    out = []
    for a in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        out.append((u[tuple(hi)] - u[tuple(lo)]) / h)
    return out


def _pair_mean(arr, axis):
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (arr[tuple(lo)] + arr[tuple(hi)])


def _pair_sum_adjoint(arr, axis, out_len):
    """Adjoint of _pair_mean: spread cell values back onto edge positions."""
    shape = list(arr.shape)
    shape[axis] = out_len
    out = np.zeros(shape)
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    out[tuple(lo)] += 0.5 * arr
    out[tuple(hi)] += 0.5 * arr
    return out


def cell_bilinear(da, db):
    """Per-cell sum over axes of the edge-mean of da[a] * db[a].

    cell_bilinear(d, d) is the squared cell gradient q; mixed arguments give
    the bilinear terms needed for line searches along a direction.
    """
    n = len(da)
    q = None
    for a in range(n):
        prod = da[a] * db[a]
        for b in range(n):
            if b != a:
                prod = _pair_mean(prod, b)
        q = prod if q is None else q + prod
    return q


def cell_grad_square(diffs):
    return cell_bilinear(diffs, diffs)


def edge_factors(cell_vals, axis):
    """Mean over the cells containing each axis-parallel edge of cell_vals.

    Boundary edges belong to fewer cells; the sum is still divided by
    2**(n-1), matching the cell-energy definition exactly.
    """
    out = cell_vals
    n = cell_vals.ndim
    for b in range(n):
        if b != axis:
            out = _pair_sum_adjoint(out, b, cell_vals.shape[b] + 1)
    return out


def energy(u, h, p, eps=0.0):
    """sum_cells h**n * (q_cell + eps**2)**(p/2)."""
    q = cell_grad_square(axis_diffs(u, h))
    if eps:
        q = q + eps * eps
    return h**u.ndim * float(np.sum(q ** (p / 2.0)))


def energy_gradient(u, h, p, eps=0.0, cell_scale=None):
    """Gradient of energy(u) with respect to the node values.

    cell_scale optionally multiplies each cell's integrand (used for
    space-dependent coefficients); it must have the cell shape.
    """
    n = u.ndim
    diffs = axis_diffs(u, h)
    q = cell_grad_square(diffs)
    k = (p / 2.0) * (q + eps * eps) ** (p / 2.0 - 1.0)
    if cell_scale is not None:
        k = k * cell_scale
    grad = np.zeros_like(u)
    for a in range(n):
        ke = edge_factors(k, a)
        flux = ke * diffs[a]
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a] = slice(None, -1)
        hi[a] = slice(1, None)
        grad[tuple(lo)] -= flux
        grad[tuple(hi)] += flux
    return 2.0 * h ** (n - 1) * grad


def edge_weight_lists(w_cells, shape, strides):
    """Per-axis edge weights and flat (tail, head) indices from cell weights.

    The weight of an edge is sum over containing cells of w_cell / 2**(n-1);
    together with the quadratic form sum_edges weight * (u_head - u_tail)**2
    this reproduces sum_cells w_cell * q_cell * h**2.
    """
    n = w_cells.ndim
    rows, cols, weights = [], [], []
    for a in range(n):
        we = edge_factors(w_cells, a)
        tail_shape = list(s + 1 for s in w_cells.shape)
        tail_shape[a] -= 1
        idx = [np.arange(m) for m in tail_shape]
        grids = np.meshgrid(*idx, indexing="ij")
        flat = sum(g * s for g, s in zip(grids, strides))
        rows.append(flat.ravel())
        cols.append(flat.ravel() + strides[a])
        weights.append(we.ravel())
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)


def flat_strides(shape):
    n = len(shape)
    strides = [1] * n
    for a in range(n - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    return strides


def cells_touching(mask):
    """Per-cell flag: any of the cell's 2**n nodes is set in `mask`."""
    n = mask.ndim
    touch = None
    from itertools import product

    for bits in product((0, 1), repeat=n):
        sl = tuple(slice(1, None) if b else slice(None, -1) for b in bits)
        touch = mask[sl].copy() if touch is None else (touch | mask[sl])
    return touch


def node_touch_mask(cell_mask):
    """Nodes belonging to at least one flagged cell."""
    n = cell_mask.ndim
    shape = tuple(m + 1 for m in cell_mask.shape)
    out = np.zeros(shape, dtype=bool)
    from itertools import product

    for bits in product((0, 1), repeat=n):
        sl = tuple(slice(1, None) if b else slice(None, -1) for b in bits)
        out[sl] |= cell_mask
    return out
