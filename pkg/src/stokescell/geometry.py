"""Hole shapes and boundary quadrature meshes.

A hole T sits in the unit cell and must satisfy the containment condition
B_{1/16} subset T subset B_{3/8}, i.e. it is centered at the origin and well
separated from the cell faces.  2D shapes are smooth closed curves given by a
global trigonometric parameterization and discretized with the trapezoid rule
(spectrally accurate).  3D shapes are spheres/ellipsoids discretized with a
Gauss-Legendre x trapezoid product rule in spherical coordinates.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize_scalar

INNER_RADIUS = 1.0 / 16.0
OUTER_RADIUS = 3.0 / 8.0

_KITE_COEF = 0.65
_KITE_YSCALE = 1.5


class ShapeError(ValueError):
    """Invalid shape parameters or containment violation."""


@dataclass(frozen=True)
class ShapeSpec:
    """Parametric description of the hole T.

    kind is one of 'disk', 'sphere', 'ellipse', 'ellipsoid', 'kite', 'star'.
    `scale` multiplies the whole shape; it is the knob used by the 2D
    rescaling-law sweep.
    """

    dim: int
    kind: str
    scale: float = 1.0
    radius: float | None = None
    semi_axes: tuple[float, ...] | None = None
    amplitude: float | None = None
    frequency: int | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ShapeError(f"dim must be 2 or 3, got {self.dim}")
        if self.scale <= 0:
            raise ShapeError("scale must be positive")
        kinds2 = ("disk", "ellipse", "kite", "star")
        kinds3 = ("sphere", "ellipsoid")
        if self.dim == 2 and self.kind not in kinds2:
            raise ShapeError(f"2D kind must be one of {kinds2}")
        if self.dim == 3 and self.kind not in kinds3:
            raise ShapeError(f"3D kind must be one of {kinds3}")
        if self.kind in ("disk", "sphere"):
            if self.radius is None or self.radius <= 0:
                raise ShapeError(f"{self.kind} needs a positive radius")
        if self.kind in ("ellipse", "ellipsoid"):
            axes = self.semi_axes
            if axes is None or len(axes) != self.dim or min(axes) <= 0:
                raise ShapeError(f"{self.kind} needs {self.dim} positive semi-axes")
        if self.kind == "star":
            if self.amplitude is None or not 0 < self.amplitude < 1:
                raise ShapeError("star needs amplitude in (0, 1)")
            if self.frequency is None or self.frequency < 1:
                raise ShapeError("star needs integer frequency >= 1")

    def rescaled(self, r):
        """The shape rT (same geometry, scale multiplied by r > 0)."""
        return ShapeSpec(self.dim, self.kind, self.scale * r, self.radius,
                         self.semi_axes, self.amplitude, self.frequency)

    @staticmethod
    def from_json(path):
        with open(path) as f:
            doc = json.load(f)
        return ShapeSpec(
            dim=doc["dim"],
            kind=doc["kind"],
            scale=doc.get("scale", 1.0),
            radius=doc.get("radius"),
            semi_axes=tuple(doc["semi_axes"]) if "semi_axes" in doc else None,
            amplitude=doc.get("amplitude"),
            frequency=doc.get("frequency"),
        )


def _curve2d(spec):
    """Return (c, dc, d2c) closures mapping parameter arrays to (n,2) arrays."""
    s = spec.scale
    if spec.kind == "disk":
        a = s * spec.radius

        def c(t):
            return a * np.stack([np.cos(t), np.sin(t)], axis=-1)

        def dc(t):
            return a * np.stack([-np.sin(t), np.cos(t)], axis=-1)

        def d2c(t):
            return -a * np.stack([np.cos(t), np.sin(t)], axis=-1)

    elif spec.kind == "ellipse":
        a, b = (s * ax for ax in spec.semi_axes)

        def c(t):
            return np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)

        def dc(t):
            return np.stack([-a * np.sin(t), b * np.cos(t)], axis=-1)

        def d2c(t):
            return np.stack([-a * np.cos(t), -b * np.sin(t)], axis=-1)

    elif spec.kind == "kite":
        k = _KITE_COEF

        def c(t):
            return s * np.stack([np.cos(t) + k * np.cos(2 * t) - k,
                                 _KITE_YSCALE * np.sin(t)], axis=-1)

        def dc(t):
            return s * np.stack([-np.sin(t) - 2 * k * np.sin(2 * t),
                                 _KITE_YSCALE * np.cos(t)], axis=-1)

        def d2c(t):
            return s * np.stack([-np.cos(t) - 4 * k * np.cos(2 * t),
                                 -_KITE_YSCALE * np.sin(t)], axis=-1)

    elif spec.kind == "star":
        A, m = spec.amplitude, spec.frequency

        def r(t):
            return s * (1.0 + A * np.cos(m * t))

        def rp(t):
            return -s * A * m * np.sin(m * t)

        def rpp(t):
            return -s * A * m * m * np.cos(m * t)

        def c(t):
            return np.stack([r(t) * np.cos(t), r(t) * np.sin(t)], axis=-1)

        def dc(t):
            return np.stack([rp(t) * np.cos(t) - r(t) * np.sin(t),
                             rp(t) * np.sin(t) + r(t) * np.cos(t)], axis=-1)

        def d2c(t):
            rr, r1, r2 = r(t), rp(t), rpp(t)
            return np.stack([(r2 - rr) * np.cos(t) - 2 * r1 * np.sin(t),
                             (r2 - rr) * np.sin(t) + 2 * r1 * np.cos(t)], axis=-1)

    else:  # pragma: no cover
        raise ShapeError(spec.kind)
    return c, dc, d2c


def radial_extent(spec, n_samples=2048):
    """(min, max) of |x| over the boundary, refined to ~1e-12 in parameter.

    2D: dense parameter sampling plus local 1D refinement.  3D shapes are
    ellipsoids, for which the extent is min/max of the scaled semi-axes.
    """
    if spec.dim == 3:
        if spec.kind == "sphere":
            r = spec.scale * spec.radius
            return r, r
        axes = spec.scale * np.asarray(spec.semi_axes)
        return float(axes.min()), float(axes.max())

    c, _, _ = _curve2d(spec)
    t = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    rad = np.linalg.norm(c(t), axis=-1)

    def refine(i, sign):
        lo = t[(i - 1) % n_samples]
        hi = lo + 2.0 * (2 * np.pi / n_samples)
        res = minimize_scalar(
            lambda s: sign * np.linalg.norm(c(np.atleast_1d(s)), axis=-1)[0],
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-13})
        return sign * res.fun

    rmin = min(rad.min(), refine(int(np.argmin(rad)), 1.0))
    rmax = max(rad.max(), -refine(int(np.argmax(rad)), -1.0))
    return float(rmin), float(rmax)


def containment_check(spec, tol=1e-9):
    """Verify B_{1/16} subset T subset B_{3/8}; returns a report dict."""
    rmin, rmax = radial_extent(spec)
    ok_inner = rmin >= INNER_RADIUS - tol
    ok_outer = rmax <= OUTER_RADIUS + tol
    return {
        "ok": bool(ok_inner and ok_outer),
        "r_min": rmin,
        "r_max": rmax,
        "contains_inner_ball": bool(ok_inner),
        "inside_outer_ball": bool(ok_outer),
    }


@dataclass(frozen=True)
class BoundaryMesh:
    """Quadrature discretization of the hole boundary.

    nodes (n, d), unit outer normals (n, d) and weights (n,) carry the
    surface measure: sum(w * f(nodes)) approximates the boundary integral.
    2D meshes additionally carry the parameterization data used by the
    singular quadratures (parameter grid, velocity, acceleration, signed
    curvature).  3D meshes carry the (theta, phi) product structure.
    """

    spec: ShapeSpec
    dim: int
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    # 2D fields
    params: np.ndarray | None = None
    dnodes: np.ndarray | None = None
    d2nodes: np.ndarray | None = None
    speed: np.ndarray | None = None
    curvature: np.ndarray | None = None
    # 3D fields
    n_theta: int = 0
    n_phi: int = 0
    gl_nodes: np.ndarray | None = None
    gl_weights: np.ndarray | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def area(self):
        """Surface measure |dT| (perimeter in 2D)."""
        return float(self.weights.sum())

    @property
    def volume(self):
        """Enclosed volume |T| via the divergence theorem."""
        return float(np.sum(self.weights * np.sum(self.nodes * self.normals, axis=1)) / self.dim)

    def interp_matrix(self, n_fine):
        """Interpolation matrix from this mesh onto a refined mesh.

        Used for near-singular evaluation: densities are spectrally
        upsampled before plain quadrature.  2D: trigonometric interpolation.
        3D: trig interpolation in phi, pole-crossing barycentric in theta.
        """
        if self.dim == 2:
            t_fine = np.linspace(0.0, 2 * np.pi, n_fine, endpoint=False)
            return trig_interp_matrix(self.params, t_fine)
        nt, nphi = n_fine
        fine = build_mesh(self.spec, (nt, nphi), validate=False)
        theta_f = np.arccos(fine.gl_nodes)
        phi_f = 2 * np.pi * np.arange(nphi) / nphi
        tt, pp = np.meshgrid(theta_f, phi_f, indexing="ij")
        P = sphere_interp_matrix(self, tt.ravel(), pp.ravel())
        return P, fine


def trig_interp_matrix(t_src, t_dst):
    """Dense trigonometric interpolation matrix (equispaced sources).

    Exact for band-limited data; rows are the periodic sinc kernel.
    """
    n = len(t_src)
    d = t_dst[:, None] - t_src[None, :]
    if n % 2 == 0:
        # even n: sin(n d/2) cot(d/2) / n, with removable singularities
        num = np.sin(n * d / 2.0) / np.tan(d / 2.0)
        K = num / n
    else:
        K = np.sin(n * d / 2.0) / (n * np.sin(d / 2.0))
    K[np.abs(np.sin(d / 2.0)) < 1e-14] = 1.0
    return K


def sphere_interp_matrix(mesh, theta_t, phi_t):
    """Interpolation from a GL x trapezoid spherical grid to target angles.

    Trig interpolation in phi composed with 8-point barycentric Lagrange in
    colatitude theta; stencils cross the poles via the mirrored extension
    f(-theta, phi) = f(theta, phi + pi).
    """
    nt, nphi = mesh.n_theta, mesh.n_phi
    theta_g = np.arccos(mesh.gl_nodes)  # decreasing in u means increasing theta order below
    order = np.argsort(theta_g)
    theta_sorted = theta_g[order]
    # extended theta grid: mirror across both poles
    n_ext = 8
    top = -theta_sorted[:n_ext][::-1]
    bot = 2 * np.pi - theta_sorted[-n_ext:][::-1]
    theta_ext = np.concatenate([top, theta_sorted, bot])
    # row index into original grid and phi shift for mirrored rows
    row_ext = np.concatenate([order[:n_ext][::-1], order, order[-n_ext:][::-1]])
    shift_ext = np.concatenate([np.ones(n_ext), np.zeros(nt), np.ones(n_ext)])

    m = len(theta_t)
    P = np.zeros((m, nt * nphi))
    phi_g = 2 * np.pi * np.arange(nphi) / nphi
    k = 8  # stencil width
    idx0 = np.searchsorted(theta_ext, theta_t)
    lo = np.clip(idx0 - k // 2, 0, len(theta_ext) - k)
    for i in range(m):
        sl = slice(lo[i], lo[i] + k)
        tg = theta_ext[sl]
        # barycentric weights for this stencil
        wb = np.ones(k)
        for j in range(k):
            diff = tg[j] - np.delete(tg, j)
            wb[j] = 1.0 / np.prod(diff)
        dt = theta_t[i] - tg
        exact = np.abs(dt) < 1e-14
        if exact.any():
            lam = exact.astype(float)
        else:
            lam = wb / dt
            lam = lam / lam.sum()
        for j in range(k):
            r = row_ext[sl][j]
            ph = phi_t[i] + np.pi * shift_ext[sl][j]
            trig = trig_interp_matrix(phi_g, np.array([ph]))[0]
            P[i, r * nphi:(r + 1) * nphi] += lam[j] * trig
    return P


def build_mesh(spec, n, validate=True):
    """Quadrature mesh on dT with n nodes (2D) or (n_theta, n_phi) (3D)."""
    if validate:
        rep = containment_check(spec)
        if not rep["ok"]:
            raise ShapeError(
                f"shape violates B_1/16 subset T subset B_3/8: "
                f"r_min={rep['r_min']:.6g}, r_max={rep['r_max']:.6g}")
    if spec.dim == 2:
        return _build_mesh_2d(spec, n)
    return _build_mesh_3d(spec, n)


def _build_mesh_2d(spec, n):
    if np.ndim(n) != 0:
        raise ShapeError("2D mesh takes a scalar node count")
    n = int(n)
    if n < 16 or n % 2:
        raise ShapeError("2D node count must be even and >= 16")
    c, dc, d2c = _curve2d(spec)
    t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    x = c(t)
    dx = dc(t)
    d2x = d2c(t)
    speed = np.linalg.norm(dx, axis=1)
    normals = np.stack([dx[:, 1], -dx[:, 0]], axis=1) / speed[:, None]
    weights = speed * (2 * np.pi / n)
    curv = (dx[:, 0] * d2x[:, 1] - dx[:, 1] * d2x[:, 0]) / speed**3
    return BoundaryMesh(spec=spec, dim=2, nodes=x, normals=normals,
                        weights=weights, params=t, dnodes=dx, d2nodes=d2x,
                        speed=speed, curvature=curv)


def _build_mesh_3d(spec, n):
    try:
        nt, nphi = (int(v) for v in n)
    except TypeError:
        raise ShapeError("3D mesh takes (n_theta, n_phi)") from None
    if nt < 6 or nphi < 6:
        raise ShapeError("3D mesh needs at least 6x6 nodes")
    if nphi % 2:
        raise ShapeError("n_phi must be even")
    if spec.kind == "sphere":
        axes = np.full(3, spec.scale * spec.radius)
    else:
        axes = spec.scale * np.asarray(spec.semi_axes, dtype=float)
    u, wu = leggauss(nt)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    s = np.sqrt(1.0 - uu**2)
    # unit-sphere points and ellipsoid map x = A v
    v = np.stack([s * np.cos(pp), s * np.sin(pp), uu], axis=-1)
    x = v * axes
    # surface element of u -> (a s cos, b s sin, c u):
    # |x_u cross x_phi| du dphi = s * sqrt(sum (abc/axes)^2 v^2) du dphi
    abc = axes.prod()
    g = abc * np.sqrt(np.sum((v / axes) ** 2, axis=-1))
    w = g * wu[:, None] * (2 * np.pi / nphi)
    # outward normal along grad((x/a)^2 + ... ) = x / axes^2
    nrm = x / axes**2
    nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
    return BoundaryMesh(spec=spec, dim=3,
                        nodes=x.reshape(-1, 3),
                        normals=nrm.reshape(-1, 3),
                        weights=w.reshape(-1),
                        n_theta=nt, n_phi=nphi,
                        gl_nodes=u, gl_weights=wu,
                        extra={"axes": axes})


def boundary_radius_function(spec):
    """r(direction) for the star-shaped-about-origin boundary.

    2D: returns a callable of polar angle theta.  3D: callable of unit
    direction vectors (m, 3).  Used by the torus volume quadrature to excise
    the hole.  Raises if the shape is not star-shaped about the origin.
    """
    if spec.dim == 3:
        if spec.kind == "sphere":
            r0 = spec.scale * spec.radius
            return lambda dirs: np.full(np.shape(dirs)[0], r0)
        axes = spec.scale * np.asarray(spec.semi_axes)

        def r3(dirs):
            return 1.0 / np.sqrt(np.sum((dirs / axes) ** 2, axis=-1))

        return r3

    c, dc, _ = _curve2d(spec)
    # check star-shapedness: x . N > 0 along the curve
    t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    x = c(t)
    dx = dc(t)
    nrm = np.stack([dx[:, 1], -dx[:, 0]], axis=1)
    if np.min(np.sum(x * nrm, axis=1)) <= 0:
        raise ShapeError(f"{spec.kind} is not star-shaped about the origin")
    ang = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    order = np.argsort(ang)
    ang_s = ang[order]
    rad_s = np.linalg.norm(x[order], axis=1)
    ang_ext = np.concatenate([ang_s[-3:] - 2 * np.pi, ang_s, ang_s[:3] + 2 * np.pi])
    rad_ext = np.concatenate([rad_s[-3:], rad_s, rad_s[:3]])

    def r2(theta):
        return np.interp(np.mod(theta, 2 * np.pi), ang_ext, rad_ext)

    return r2
