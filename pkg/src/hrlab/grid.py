"""Discrete geometry: box domains, the Neumann Laplacian, norms and field I/O.

The domain is an axis-aligned box in 1, 2 or 3 dimensions with vertex-centered
nodes (boundary nodes included).  The zero-flux boundary condition is imposed
by mirror reflection across the boundary node, which makes discrete cosine
modes exact eigenvectors of the Laplacian.  Quadrature is the trapezoid rule,
and the gradient norm uses face-centered differences weighted so that the
summation-by-parts identity  <lap(f), f> = -||grad f||^2  holds in exact
arithmetic.  All reductions go through np.sum (fixed pairwise order), so
results are reproducible run to run.
"""

from dataclasses import dataclass

import numpy as np


class Grid:
    """Axis-aligned box grid.

    Parameters
    ----------
    lengths : float or sequence of float
        Domain extent per axis.
    resolution : int or sequence of int
        Cell count per axis; the node count per axis is one more.
    """

    def __init__(self, lengths, resolution):
        lengths = tuple(float(x) for x in np.atleast_1d(lengths))
        resolution = tuple(int(n) for n in np.atleast_1d(resolution))
        if len(lengths) != len(resolution):
            raise ValueError("lengths and resolution must have the same number of axes")
        if not 1 <= len(lengths) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3, got %d" % len(lengths))
        if any(x <= 0 for x in lengths):
            raise ValueError("domain lengths must be positive")
        if any(n < 1 for n in resolution):
            raise ValueError("resolution must be at least one cell per axis")
        self.dim = len(lengths)
        self.lengths = lengths
        self.resolution = resolution
        self.spacing = tuple(L / n for L, n in zip(lengths, resolution))
        self.shape = tuple(n + 1 for n in resolution)
        self.measure = float(np.prod(lengths))

        axis_weights = []
        for n_nodes, h in zip(self.shape, self.spacing):
            w = np.full(n_nodes, h)
            w[0] *= 0.5
            w[-1] *= 0.5
            axis_weights.append(w)
        self._axis_weights = axis_weights
        weights = axis_weights[0]
        for w in axis_weights[1:]:
            weights = np.multiply.outer(weights, w)
        self.weights = weights
        self._face_weights = [self._build_face_weights(ax) for ax in range(self.dim)]

    def _build_face_weights(self, axis):
        # weight of the face between nodes i, i+1 along `axis`: h_axis times
        # the transverse trapezoid weights; makes <lap f, f> = -||grad f||^2 exact
        parts = []
        for ax in range(self.dim):
            if ax == axis:
                parts.append(np.full(self.shape[ax] - 1, self.spacing[ax]))
            else:
                parts.append(self._axis_weights[ax])
        w = parts[0]
        for p in parts[1:]:
            w = np.multiply.outer(w, p)
        return w

    def axis_coords(self, axis):
        """Node coordinates along one axis, from 0 to the axis length."""
        n = self.shape[axis]
        return np.linspace(0.0, self.lengths[axis], n)

    def meshgrid(self):
        """Node coordinate arrays, one per axis, in 'ij' indexing."""
        return np.meshgrid(*(self.axis_coords(ax) for ax in range(self.dim)),
                           indexing="ij")

    def __repr__(self):
        return "Grid(lengths=%r, resolution=%r)" % (self.lengths, self.resolution)


@dataclass
class StateField:
    """The (u, v, w) triple on the grid nodes.

    u is the membrane potential, v the spiking variable, w the bursting
    variable; all three arrays share the grid shape.
    """

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if not (self.u.shape == self.v.shape == self.w.shape):
            raise ValueError("u, v, w must share one shape, got %r, %r, %r"
                             % (self.u.shape, self.v.shape, self.w.shape))

    def components(self):
        return (self.u, self.v, self.w)

    def copy(self):
        return StateField(self.u.copy(), self.v.copy(), self.w.copy())

    def all_finite(self):
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all()
                    and np.isfinite(self.w).all())

    @classmethod
    def zeros(cls, grid):
        return cls(np.zeros(grid.shape), np.zeros(grid.shape), np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid, u0, v0, w0):
        return cls(np.full(grid.shape, float(u0)),
                   np.full(grid.shape, float(v0)),
                   np.full(grid.shape, float(w0)))


def _check_shape(field, grid):
    field = np.asarray(field, dtype=float)
    if field.shape != grid.shape:
        raise ValueError("field shape %r does not match grid shape %r"
                         % (field.shape, grid.shape))
    return field


def laplacian_neumann(field, grid):
    """Second-order Laplacian with mirror-reflected ghost nodes (zero flux).

    At a boundary node the ghost value equals the first interior value, so a
    3-node line (0, 1, 0) with h = 1 maps to (2, -2, 2).  Constants are in the
    kernel exactly, and discrete cosine modes are exact eigenvectors.
    """
    field = _check_shape(field, grid)
    out = np.zeros_like(field)
    for ax, h in enumerate(grid.spacing):
        f = np.moveaxis(field, ax, 0)
        o = np.moveaxis(out, ax, 0)
        inv_h2 = 1.0 / (h * h)
        o[1:-1] += (f[2:] - 2.0 * f[1:-1] + f[:-2]) * inv_h2
        o[0] += 2.0 * (f[1] - f[0]) * inv_h2
        o[-1] += 2.0 * (f[-2] - f[-1]) * inv_h2
    return out


def inner_l2(f1, f2, grid):
    """Trapezoid-weighted discrete L2 inner product."""
    f1 = _check_shape(f1, grid)
    f2 = _check_shape(f2, grid)
    return float(np.sum(grid.weights * f1 * f2))


def norm_l2(field, grid):
    field = _check_shape(field, grid)
    return float(np.sqrt(np.sum(grid.weights * field * field)))


def norm_grad_sq(field, grid):
    """Squared gradient norm via face-centered differences.

    The face weights are chosen so that inner_l2(laplacian_neumann(f), f)
    equals -norm_grad_sq(f) exactly (up to rounding).
    """
    field = _check_shape(field, grid)
    total = 0.0
    for ax, h in enumerate(grid.spacing):
        d = np.diff(field, axis=ax) / h
        total += float(np.sum(grid._face_weights[ax] * d * d))
    return total


def norm_grad(field, grid):
    return float(np.sqrt(norm_grad_sq(field, grid)))


def norm_h1(field, grid):
    field = _check_shape(field, grid)
    l2sq = float(np.sum(grid.weights * field * field))
    return float(np.sqrt(l2sq + norm_grad_sq(field, grid)))


def norm_l4(field, grid):
    field = _check_shape(field, grid)
    return float(np.sum(grid.weights * field ** 4) ** 0.25)


def norm_l4_pow4(field, grid):
    field = _check_shape(field, grid)
    return float(np.sum(grid.weights * field ** 4))


def state_norm_h_sq(state, grid):
    """Squared H = [L2]^3 norm of a StateField."""
    return float(sum(np.sum(grid.weights * c * c) for c in state.components()))


def state_grad_sq(state, grid):
    """Squared gradient norm summed over the three components."""
    return float(sum(norm_grad_sq(c, grid) for c in state.components()))


def state_norm_e_sq(state, grid):
    """Squared E = [H1]^3 norm of a StateField."""
    return state_norm_h_sq(state, grid) + state_grad_sq(state, grid)


def state_diff_h_sq(a, b, grid):
    return float(sum(np.sum(grid.weights * (ca - cb) ** 2)
                     for ca, cb in zip(a.components(), b.components())))


def cosine_mode(grid, wavenumbers):
    """Product of cos(k*pi*x/L) factors; an exact discrete Neumann eigenvector."""
    if np.isscalar(wavenumbers):
        wavenumbers = (int(wavenumbers),)
    if len(wavenumbers) != grid.dim:
        raise ValueError("need one wavenumber per axis")
    field = np.ones(grid.shape)
    coords = grid.meshgrid()
    for ax, k in enumerate(wavenumbers):
        field = field * np.cos(k * np.pi * coords[ax] / grid.lengths[ax])
    return field


def random_smooth_field(grid, rng, modes=4):
    """Random low-mode cosine combination; resolved on desk-scale grids."""
    field = np.zeros(grid.shape)
    if grid.dim == 1:
        kk = [(k,) for k in range(modes)]
    elif grid.dim == 2:
        kk = [(i, j) for i in range(modes) for j in range(modes)]
    else:
        kk = [(i, j, l) for i in range(modes) for j in range(modes)
              for l in range(modes)]
    for k in kk:
        field += rng.uniform(-1.0, 1.0) * cosine_mode(grid, k)
    return field


def random_smooth_state(grid, rng, norm_sq=None, modes=4):
    """Random smooth StateField, optionally rescaled to a target H norm."""
    state = StateField(random_smooth_field(grid, rng, modes),
                       random_smooth_field(grid, rng, modes),
                       random_smooth_field(grid, rng, modes))
    if norm_sq is not None:
        current = state_norm_h_sq(state, grid)
        if current > 0.0:
            s = np.sqrt(norm_sq / current)
            state = StateField(s * state.u, s * state.v, s * state.w)
    return state


# --- StateField serialization -------------------------------------------------
#
# Binary layout: dim then per-axis node counts as little-endian int64, then the
# u, v, w payloads as little-endian float64 in row-major order.

def save_state_binary(state, path):
    u, v, w = state.components()
    with open(path, "wb") as fh:
        header = np.array((u.ndim,) + u.shape, dtype="<i8")
        header.tofile(fh)
        for comp in (u, v, w):
            np.ascontiguousarray(comp, dtype="<f8").tofile(fh)


def load_state_binary(path):
    with open(path, "rb") as fh:
        dim = int(np.fromfile(fh, dtype="<i8", count=1)[0])
        if not 1 <= dim <= 3:
            raise ValueError("corrupt field file: dim=%d" % dim)
        shape = tuple(int(n) for n in np.fromfile(fh, dtype="<i8", count=dim))
        count = int(np.prod(shape))
        comps = []
        for _ in range(3):
            data = np.fromfile(fh, dtype="<f8", count=count)
            if data.size != count:
                raise ValueError("corrupt field file: truncated payload")
            comps.append(data.reshape(shape))
    return StateField(*comps)


def save_state_csv(state, grid, path):
    """CSV with the axis coordinates followed by u, v, w, one node per row."""
    coords = grid.meshgrid()
    axis_names = ("x", "y", "z")[:grid.dim]
    header = ",".join(axis_names + ("u", "v", "w"))
    cols = [c.ravel() for c in coords] + [c.ravel() for c in state.components()]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def load_state_csv(path, grid):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    comps = [data[:, grid.dim + i].reshape(grid.shape) for i in range(3)]
    return StateField(*comps)
