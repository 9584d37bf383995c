"""Spacetime velocity/force fields and their boundary diagnostics.

A FieldSource evaluates a velocity (or force) and its spatial gradient at
arbitrary (t, x).  Gradients follow the convention grad[..., i, j] = d u_i /
d x_j.  Analytic sources carry closed-form derivatives; gridded sources
interpolate trilinearly in space and linearly in time with second-order
one-sided stencils at the walls.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, Triangulation, gauss_nodes, shell_jacobian, tubular_point

MAGIC = b"LSEPFLD1"


class FieldError(ValueError):
    pass


class IngestionError(FieldError):
    pass


@dataclass
class FieldSource:
    """Evaluable spacetime vector field."""

    value: object                      # (t, X) -> (..., 3)
    gradient: object = None            # (t, X) -> (..., 3, 3)
    time_derivative: object = None     # (t, X) -> (..., 3)
    time_range: tuple = (0.0, np.inf)
    kind: str = "analytic"

    def curl(self, t, X):
        if self.gradient is None:
            raise FieldError("source has no gradient; cannot take a curl trace")
        G = self.gradient(t, X)
        return np.stack([
            G[..., 2, 1] - G[..., 1, 2],
            G[..., 0, 2] - G[..., 2, 0],
            G[..., 1, 0] - G[..., 0, 1],
        ], axis=-1)


def zero_field() -> FieldSource:
    zv = lambda t, X: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(X)[:-1]) + (3,))
    zg = lambda t, X: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(X)[:-1]) + (3, 3))
    return FieldSource(zv, zg, zv)


@dataclass
class NSData:
    """A Navier-Stokes solution/force pair at one viscosity."""

    velocity: FieldSource
    force: FieldSource
    viscosity: float
    domain: Domain = None
    initial_h1: float | None = None       # squared H^1 norm of u(0)
    closed_forms: dict = field(default_factory=dict)
    is_solution: bool = True
    dissipation_proxy: object = None      # direct |grad u|^2-proxy for synthetic data

    def __post_init__(self):
        if not self.viscosity > 0:
            raise FieldError("viscosity must be positive")


@dataclass
class EulerData:
    """Background Euler solution with impermeable boundary."""

    velocity: FieldSource
    force: FieldSource
    boundary_sup_A: float
    domain: Domain = None


# ---------------------------------------------------------------------------
# boundary traces
# ---------------------------------------------------------------------------

@dataclass
class BoundaryTrace:
    """Boundary samples of a vector quantity on mesh quadrature nodes.

    Nodes carry the surface measure of their triangles; together with the
    uniform time weights the total weight is T * |boundary|.  The generating
    evaluator is kept so that coarser averages (conditional expectations) can
    be requadratured per cell instead of resampled.
    """

    mesh: Triangulation
    times: np.ndarray           # (M,) midpoints of a uniform grid on (0, T)
    nodes: np.ndarray           # (N, Q, 3)
    node_weights: np.ndarray    # (N, Q), sums to |boundary|
    evaluator: object           # (t, X) -> (..., 3)
    name: str = "trace"

    @property
    def time_weight(self) -> float:
        t = self.times
        return float(t[1] - t[0]) if len(t) > 1 else 2.0 * float(t[0])

    @property
    def total_weight(self) -> float:
        return self.time_weight * len(self.times) * float(self.node_weights.sum())

    def sample(self, it: int):
        return self.evaluator(self.times[it], self.nodes)

    def time_integral_surface_average(self):
        """Integral over time x boundary divided by the total measure."""
        acc = 0.0
        for it in range(len(self.times)):
            vals = self.sample(it)
            acc += np.einsum("nq,nqc->c", self.node_weights, vals)
        return acc * self.time_weight / self.total_weight


def _mesh_nodes(mesh: Triangulation, order: int = 2):
    from .geometry import triangle_ref_quadrature
    a, b, w = triangle_ref_quadrature(order)
    carriers = mesh.carrier_array()
    v0 = carriers[:, 0][:, None, :]
    e1 = (carriers[:, 1] - carriers[:, 0])[:, None, :]
    e2 = (carriers[:, 2] - carriers[:, 0])[:, None, :]
    pts = v0 + a[None, :, None] * e1 + b[None, :, None] * e2
    surf = mesh.triangles[0].surface
    groups = {}
    for i, t in enumerate(mesh.triangles):
        groups.setdefault(id(t.surface), (t.surface, []))[1].append(i)
    X = np.empty_like(pts)
    weights = np.empty(pts.shape[:2])
    for surf, idx in groups.values():
        P = pts[idx]
        J = surf.jacobian(P)
        t1 = np.einsum("nqij,nj->nqi", J, e1[idx][:, 0])
        t2 = np.einsum("nqij,nj->nqi", J, e2[idx][:, 0])
        elem = np.linalg.norm(np.cross(t1, t2), axis=-1)
        X[idx] = surf.to3d(P)
        weights[idx] = elem * w[None, :]
    return X, weights


def vorticity_trace(ns: NSData, mesh: Triangulation, time_samples: int,
                    T: float | None = None, order: int = 2) -> BoundaryTrace:
    """Sample curl(u) on triangle quadrature nodes times uniform time nodes."""
    if ns.velocity.gradient is None:
        raise FieldError("velocity source exposes no gradient; vorticity trace unavailable")
    if T is None:
        T = ns.velocity.time_range[1]
    if not np.isfinite(T):
        raise FieldError("specify a finite time horizon for the trace")
    nodes, weights = _mesh_nodes(mesh, order)
    # midpoint time grid avoids the t=0 gradient singularity of wall layers
    times = (np.arange(time_samples) + 0.5) * (T / time_samples)
    return BoundaryTrace(mesh, times, nodes, weights,
                         lambda t, X: ns.velocity.curl(t, X), name="vorticity")


def boundary_field_trace(source: FieldSource, mesh: Triangulation, time_samples: int,
                         T: float, order: int = 2, name: str = "field") -> BoundaryTrace:
    nodes, weights = _mesh_nodes(mesh, order)
    times = (np.arange(time_samples) + 0.5) * (T / time_samples)
    return BoundaryTrace(mesh, times, nodes, weights, source.value, name=name)


# ---------------------------------------------------------------------------
# quadrature grids
# ---------------------------------------------------------------------------

def time_nodes(T: float, n: int, sqrt_transform: bool = False, t0: float = 0.0):
    """Gauss nodes on (t0, T); with sqrt_transform the rule is Gauss in
    sqrt(t), which absorbs the t^(-1/2) wall-layer singularity."""
    if sqrt_transform:
        tau, w = gauss_nodes(np.sqrt(t0), np.sqrt(T), n)
        return tau**2, 2.0 * tau * w
    return gauss_nodes(t0, T, n)


def channel_volume_nodes(domain: Domain, nx: int = 8, ny: int = 48, nz: int = 8,
                         y_panels=None):
    """Tensor quadrature for the channel interior.

    Periodic directions use uniform nodes (spectrally accurate); the wall
    direction uses Gauss panels, geometrically refined toward both walls when
    y_panels is given.
    """
    if domain.kind != "channel":
        raise FieldError("volume quadrature implemented for channel domains")
    Lx, Lz, h = domain.params["Lx"], domain.params["Lz"], domain.params["height"]
    xs = (np.arange(nx) + 0.5) * (Lx / nx)
    zs = (np.arange(nz) + 0.5) * (Lz / nz)
    if y_panels is None:
        ys, wy = gauss_nodes(0.0, h, ny)
    else:
        ys_list, wy_list = [], []
        edges = np.asarray(y_panels)
        for a, b in zip(edges[:-1], edges[1:]):
            y_, w_ = gauss_nodes(a, b, ny)
            ys_list.append(y_)
            wy_list.append(w_)
        ys, wy = np.concatenate(ys_list), np.concatenate(wy_list)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    w = (Lx / nx) * (Lz / nz) * np.tile(np.repeat(wy, nz), nx)
    return pts, w


def wall_layer_panels(h: float, delta: float, scale: float, max_panels: int = 12):
    """Geometric panel edges on (0, delta) resolving the scale near the wall."""
    edges = [0.0]
    a = min(scale, delta)
    while edges[-1] + a < delta and len(edges) < max_panels:
        edges.append(edges[-1] + a)
        a *= 2.0
    edges.append(delta)
    return np.array(edges)


def volume_integral(domain: Domain, fn, nx=8, ny=48, nz=8, y_panels=None) -> float:
    pts, w = channel_volume_nodes(domain, nx, ny, nz, y_panels)
    return float(np.sum(w * fn(pts)))


# ---------------------------------------------------------------------------
# layer integrals and norms
# ---------------------------------------------------------------------------

def _grad_sq(ns: NSData, t, X):
    G = ns.velocity.gradient(t, X)
    return np.sum(G * G, axis=(-2, -1))


def layer_dissipation(ns: NSData, domain: Domain, delta: float, T: float | None = None,
                      mesh: Triangulation | None = None, n_time: int = 32,
                      z_order: int = 8, surface_order: int = 2) -> float:
    """Energy dissipation in the delta-tubular layer: int nu |grad u|^2.

    Time uses a sqrt-substituted Gauss rule and depth uses geometric panels,
    so diffusive wall layers of width sqrt(nu t) are resolved without ever
    sampling t = 0.
    """
    if not 0.0 < delta <= domain.bar_delta * (1 + 1e-12):
        raise FieldError("layer width must lie in (0, bar_delta]")
    return _layer_integral(ns, domain, delta, lambda t, X: ns.viscosity * _grad_sq(ns, t, X),
                           T, mesh, n_time, z_order, surface_order)


def _layer_integral(ns, domain, delta, integrand, T=None, mesh=None,
                    n_time=32, z_order=8, surface_order=2) -> float:
    if T is None:
        T = ns.velocity.time_range[1]
    ts, wt = time_nodes(T, n_time, sqrt_transform=True)
    if mesh is None:
        from .geometry import triangulate_boundary
        mesh = triangulate_boundary(domain, domain.bar_delta / 2.0)
    nodes, sw = _mesh_nodes(mesh, surface_order)
    total = 0.0
    for t, w_t in zip(ts, wt):
        scale = np.sqrt(2.0 * ns.viscosity * t)
        edges = wall_layer_panels(domain.bar_delta, delta, 0.5 * scale)
        zs, wz = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            z_, w_ = gauss_nodes(a, b, z_order)
            zs.append(z_)
            wz.append(w_)
        zs, wz = np.concatenate(zs), np.concatenate(wz)
        acc = 0.0
        for z, w_z in zip(zs, wz):
            P = tubular_point(domain, nodes, np.full(nodes.shape[:-1], z))
            jac = shell_jacobian(domain, nodes, z)
            acc += w_z * np.sum(sw * jac * integrand(t, P))
        total += w_t * acc
    return float(total)


def strain_sup_norm(euler: EulerData, t: float, domain: Domain | None = None,
                    nx: int = 8, ny: int = 24, nz: int = 8) -> float:
    """Sup over sample points of the largest |eigenvalue| of sym(grad u)."""
    if euler.velocity.gradient is None:
        raise FieldError("Euler source exposes no gradient")
    dom = domain or euler.domain
    pts, _ = channel_volume_nodes(dom, nx, ny, nz)
    G = euler.velocity.gradient(t, pts)
    S = 0.5 * (G + np.swapaxes(G, -1, -2))
    ev = np.linalg.eigvalsh(S)
    return float(np.max(np.abs(ev))) if ev.size else 0.0


# ---------------------------------------------------------------------------
# gridded sources: byte-exact file format
# ---------------------------------------------------------------------------
# Layout (little-endian):
#   8 bytes  magic "LSEPFLD1"
#   4 int64  nt, nx, ny, nz
#   4 float64 T, Lx, height, Lz
#   nt*nx*ny*nz*3 float64, C order over (t, x, y, z, component)
# x and z sample i/nx*Lx and k/nz*Lz (periodic, endpoint omitted);
# y samples j/(ny-1)*height including both walls; t samples m/(nt-1)*T.


def write_field_file(path, values: np.ndarray, T: float, Lx: float, height: float, Lz: float):
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 5 or values.shape[4] != 3:
        raise IngestionError("field array must have shape (nt, nx, ny, nz, 3)")
    nt, nx, ny, nz, _ = values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4q", nt, nx, ny, nz))
        fh.write(struct.pack("<4d", T, Lx, height, Lz))
        fh.write(values.tobytes())


def ingest_grid(path, layout: dict | None = None) -> FieldSource:
    """Load a gridded source; trilinear in space, linear in time."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if head != MAGIC:
            raise IngestionError(f"bad magic {head!r}; not a field file")
        nt, nx, ny, nz = struct.unpack("<4q", fh.read(32))
        T, Lx, height, Lz = struct.unpack("<4d", fh.read(32))
        raw = fh.read()
    expected = nt * nx * ny * nz * 3 * 8
    if len(raw) != expected:
        raise IngestionError(f"truncated file: {len(raw)} payload bytes, expected {expected}")
    vals = np.frombuffer(raw, dtype="<f8").reshape(nt, nx, ny, nz, 3)
    bad = np.argwhere(~np.isfinite(vals))
    if len(bad):
        raise IngestionError(f"non-finite entry at index {tuple(bad[0])}")
    return _GriddedSource(vals, T, Lx, height, Lz)


class _GriddedSource(FieldSource):
    def __init__(self, vals, T, Lx, height, Lz):
        self.vals = vals
        self.T, self.Lx, self.height, self.Lz = T, Lx, height, Lz
        self.grad_vals = self._grid_gradient()
        super().__init__(self._value, self._gradient, None, (0.0, T), kind="gridded")

    def _grid_gradient(self):
        nt, nx, ny, nz, _ = self.vals.shape
        dx, dz = self.Lx / nx, self.Lz / nz
        dy = self.height / (ny - 1)
        G = np.empty(self.vals.shape + (3,))
        v = self.vals
        G[..., 0] = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * dx)
        G[..., 2] = (np.roll(v, -1, axis=3) - np.roll(v, 1, axis=3)) / (2 * dz)
        gy = np.empty_like(v)
        gy[:, :, 1:-1] = (v[:, :, 2:] - v[:, :, :-2]) / (2 * dy)
        # second-order one-sided stencils at the walls
        gy[:, :, 0] = (-3 * v[:, :, 0] + 4 * v[:, :, 1] - v[:, :, 2]) / (2 * dy)
        gy[:, :, -1] = (3 * v[:, :, -1] - 4 * v[:, :, -2] + v[:, :, -3]) / (2 * dy)
        G[..., 1] = gy
        return G

    def _interp(self, arr, t, X):
        t = np.asarray(t, dtype=float)
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(t.shape, X.shape[:-1])
        t = np.broadcast_to(t, shape).ravel()
        P = np.broadcast_to(X, shape + (3,)).reshape(-1, 3)
        nt, nx, ny, nz = arr.shape[:4]
        ft = np.clip(t / self.T * (nt - 1), 0, nt - 1)
        fx = P[:, 0] / self.Lx * nx % nx
        fy = np.clip(P[:, 1] / self.height * (ny - 1), 0, ny - 1)
        fz = P[:, 2] / self.Lz * nz % nz
        out = 0.0
        it0 = np.clip(np.floor(ft).astype(int), 0, nt - 2) if nt > 1 else np.zeros(len(ft), int)
        at = ft - it0 if nt > 1 else np.zeros(len(ft))
        ix0 = np.floor(fx).astype(int)
        ax = fx - ix0
        iy0 = np.clip(np.floor(fy).astype(int), 0, max(ny - 2, 0))
        ay = fy - iy0
        iz0 = np.floor(fz).astype(int)
        az = fz - iz0
        comp_shape = arr.shape[4:]
        out = np.zeros((len(ft),) + comp_shape)
        for dt_, wt_ in ((0, 1 - at), (1, at)) if nt > 1 else ((0, np.ones(len(ft))),):
            it = np.minimum(it0 + dt_, nt - 1)
            for dx_, wx_ in ((0, 1 - ax), (1, ax)):
                ix = (ix0 + dx_) % nx
                for dy_, wy_ in ((0, 1 - ay), (1, ay)):
                    iy = np.minimum(iy0 + dy_, ny - 1)
                    for dz_, wz_ in ((0, 1 - az), (1, az)):
                        iz = (iz0 + dz_) % nz
                        w = (wt_ * wx_ * wy_ * wz_)
                        out += w.reshape((-1,) + (1,) * len(comp_shape)) * arr[it, ix, iy, iz]
        return out.reshape(shape + comp_shape)

    def _value(self, t, X):
        return self._interp(self.vals, t, X)

    def _gradient(self, t, X):
        g = self._interp(self.grad_vals, t, X)
        return g  # (..., 3 components, 3 derivative dirs) == (..., i, j)
