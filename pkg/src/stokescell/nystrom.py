"""Nystrom discretization of the Stokes layer operators S, K, K*.

2D: global trapezoid discretization with Martensen/Kussmaul-Kress splitting
for the logarithmic kernel of S, and, for the Cauchy-type antisymmetric part
of the double-layer kernel, the punctured trapezoid rule plus its exact
spectral correction (the punctured rule for a p.v. cotangent kernel has the
closed-form defect 2h f'(t), removed here with the spectral differentiation
matrix).  Both rules are spectrally accurate on analytic curves.

3D (sphere/ellipsoid): per-target polar quadrature.  For each target the
surface is re-parameterized in rotated spherical coordinates centered at the
target; the sin(theta) Jacobian cancels the 1/r singularity (Duffy-type) and
the symmetric azimuthal rule handles the principal value of the Cauchy term.
Densities are read off the fixed Gauss-Legendre x trapezoid grid by
trigonometric interpolation in phi and pole-crossing barycentric
interpolation in theta.

Unknown ordering is node-major: the discrete density is values.reshape(-1)
for values of shape (n_nodes, d).
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg import lapack as _lapack

from . import kernels
from .geometry import BoundaryMesh, build_mesh


class SingularOperatorError(np.linalg.LinAlgError):
    """Dense solve hit a numerically singular operator."""


@dataclass
class OperatorMatrix:
    """Dense (d n) x (d n) discretization of a boundary operator."""

    matrix: np.ndarray
    tag: str
    mesh: BoundaryMesh

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, density):
        d = self.mesh.dim
        return (self.matrix @ density.reshape(-1)).reshape(-1, d)


def weight_vector(mesh):
    """Quadrature weights repeated per component (node-major ordering)."""
    return np.repeat(mesh.weights, mesh.dim)


def l2_norm(mesh, values):
    """L2(dT) norm of nodal values (n, d) or (n,)."""
    v2 = np.sum(np.atleast_2d(values.reshape(mesh.n_nodes, -1)) ** 2, axis=1)
    return float(np.sqrt(np.sum(mesh.weights * v2)))


def l2_inner(mesh, u, v):
    return float(np.sum(mesh.weights * np.sum(
        u.reshape(mesh.n_nodes, -1) * v.reshape(mesh.n_nodes, -1), axis=1)))


def mean_value(mesh, values):
    """Surface average <f>_dT."""
    return (mesh.weights @ values.reshape(mesh.n_nodes, -1)) / mesh.area


def _blocks_to_matrix(blocks):
    # blocks (n, n, d, d) with [i, j, a, b] -> matrix[(i,a), (j,b)]
    n, _, d, _ = blocks.shape
    return np.ascontiguousarray(blocks.transpose(0, 2, 1, 3)).reshape(n * d, n * d)


def weighted_adjoint(op):
    """Exact discrete adjoint with respect to the w-weighted inner product."""
    w = weight_vector(op.mesh)
    mat = (op.matrix * w[:, None]).T / w[:, None]
    return OperatorMatrix(mat, op.tag + "*", op.mesh)


# ----------------------------------------------------------------------------
# 2D rules
# ----------------------------------------------------------------------------

def kress_log_weights(n):
    """Circulant weights R_k for int log(4 sin^2((t-s)/2)) f(s) ds.

    Exact for trigonometric polynomials of degree < n/2 (n even).
    """
    k = np.arange(n)
    h = 2 * np.pi / n
    m = np.arange(1, n // 2)
    rho = -(4 * np.pi / n) * np.sum(np.cos(np.outer(k, m) * h) / m, axis=1)
    rho -= (4 * np.pi / n**2) * (-1.0) ** k
    return rho


def spectral_diff_matrix(n):
    """Differentiation matrix on n equispaced periodic nodes (n even)."""
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 0.5 * (-1.0) ** d / np.tan(d * np.pi / n)
    np.fill_diagonal(D, 0.0)
    return D


def _assemble_slp_2d(mesh):
    n = mesh.n_nodes
    t = mesh.params
    h = 2 * np.pi / n
    x = mesh.nodes
    sp = mesh.speed
    r = x[:, None, :] - x[None, :, :]
    r2 = np.sum(r * r, axis=-1)
    u = t[:, None] - t[None, :]
    sin2 = 4.0 * np.sin(u / 2.0) ** 2
    # w = |r|^2 / (4 sin^2(u/2)) is smooth and positive; diagonal |c'|^2
    np.fill_diagonal(sin2, 1.0)
    np.fill_diagonal(r2, 1.0)
    w_smooth = r2 / sin2
    np.fill_diagonal(w_smooth, sp**2)
    rr = r[:, :, :, None] * r[:, :, None, :]
    rr_over_r2 = rr / r2[:, :, None, None]
    tau = mesh.dnodes / sp[:, None]
    idx = np.arange(n)
    rr_over_r2[idx, idx] = tau[:, :, None] * tau[:, None, :]

    eye = np.eye(2)
    A = sp / (8 * np.pi)  # log-factor, depends on source only
    B = sp[None, :, None, None] * (
        np.log(w_smooth)[:, :, None, None] * eye / (8 * np.pi)
        - rr_over_r2 / (4 * np.pi))

    rho = kress_log_weights(n)
    Rmat = rho[(idx[:, None] - idx[None, :]) % n]
    blocks = Rmat[:, :, None, None] * A[None, :, None, None] * eye + h * B
    return _blocks_to_matrix(blocks)


def _assemble_np_2d(mesh):
    n = mesh.n_nodes
    t = mesh.params
    h = 2 * np.pi / n
    x = mesh.nodes
    nrm = mesh.normals
    sp = mesh.speed
    dx = mesh.dnodes
    d2x = mesh.d2nodes
    r = x[:, None, :] - x[None, :, :]
    r2 = np.sum(r * r, axis=-1)
    u = t[:, None] - t[None, :]
    idx = np.arange(n)

    # Cauchy part: q(t,s) |c'| = -cot(u/2)/(8 pi) + btilde(t,s)
    np.fill_diagonal(r2, 1.0)
    wedge = r[:, :, 0] * nrm[None, :, 1] - r[:, :, 1] * nrm[None, :, 0]
    q_scaled = wedge * sp[None, :] / (4 * np.pi * r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(u / 2.0)
    np.fill_diagonal(cot, 0.0)
    btilde = q_scaled + cot / (8 * np.pi)
    diag_b = np.sum(dx * d2x, axis=1) / (8 * np.pi * sp**2)
    btilde[idx, idx] = diag_b
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    cauchy_scalar = h * (-cot / (8 * np.pi) + btilde)
    # punctured-trapezoid defect for the p.v. cotangent kernel: the rule
    # overshoots by 2h f'(t); remove it spectrally (a = -1/(8 pi) constant)
    cauchy_scalar += (h / (4 * np.pi)) * spectral_diff_matrix(n)
    blocks = cauchy_scalar[:, :, None, None] * J

    # weakly singular terms with curvature diagonal limits
    nr = np.sum(nrm[None, :, :] * r, axis=-1)
    rr = r[:, :, :, None] * r[:, :, None, :]
    eye = np.eye(2)
    weak = (-(nr / (2 * np.pi))[:, :, None, None] * rr / (r2 * r2)[:, :, None, None]
            - (nr / (4 * np.pi))[:, :, None, None] * eye / r2[:, :, None, None])
    tau = dx / sp[:, None]
    kappa = mesh.curvature
    weak[idx, idx] = (kappa / (4 * np.pi))[:, None, None] * (tau[:, :, None] * tau[:, None, :]) \
        + (kappa / (8 * np.pi))[:, None, None] * eye
    blocks = blocks + h * sp[None, :, None, None] * weak
    return _blocks_to_matrix(blocks)


def _assemble_conormal_2d(mesh):
    """Trace operator K* of the conormal of (S, Q): same machinery as K.

    The Cauchy factor carries the normal at the *target*; the weakly
    singular part is <N_x, r> [I/(4 pi |r|^2) + r r^T/(2 pi |r|^4)].
    """
    n = mesh.n_nodes
    t = mesh.params
    h = 2 * np.pi / n
    x = mesh.nodes
    nrm = mesh.normals
    sp = mesh.speed
    dx = mesh.dnodes
    d2x = mesh.d2nodes
    r = x[:, None, :] - x[None, :, :]
    r2 = np.sum(r * r, axis=-1)
    u = t[:, None] - t[None, :]
    idx = np.arange(n)
    np.fill_diagonal(r2, 1.0)

    # Cauchy part: q_c |c'(s)| = a_c cot(u/2) + b_c with
    # a_c = |c'(s)|/(8 pi |c'(t)|), computed via r.c'(t)
    rdct = np.sum(r * dx[:, None, :], axis=-1)
    Qc = rdct * sp[None, :] / (4 * np.pi * r2 * sp[:, None])
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = 1.0 / np.tan(u / 2.0)
    np.fill_diagonal(cot, 0.0)
    a_c = sp[None, :] / (8 * np.pi * sp[:, None])
    btilde = Qc - a_c * cot
    dlogw_diag = np.sum(dx * d2x, axis=1) / sp**2
    btilde[idx, idx] = dlogw_diag / (8 * np.pi)
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    cauchy_scalar = h * (a_c * cot + btilde)
    # punctured-trapezoid defect: -2h d/ds[a_c(t,s) f(s)] at s = t
    D = spectral_diff_matrix(n)
    cauchy_scalar += -(h / (4 * np.pi)) * (D + np.diag(dlogw_diag))
    blocks = cauchy_scalar[:, :, None, None] * J

    nr = np.sum(nrm[:, None, :] * r, axis=-1)   # <N_x, x - y>
    rr = r[:, :, :, None] * r[:, :, None, :]
    eye = np.eye(2)
    weak = ((nr / (4 * np.pi))[:, :, None, None] * eye / r2[:, :, None, None]
            + (nr / (2 * np.pi))[:, :, None, None] * rr / (r2 * r2)[:, :, None, None])
    tau = dx / sp[:, None]
    kappa = mesh.curvature
    weak[idx, idx] = (kappa / (8 * np.pi))[:, None, None] * eye \
        + (kappa / (4 * np.pi))[:, None, None] * (tau[:, :, None] * tau[:, None, :])
    blocks = blocks + h * sp[None, :, None, None] * weak
    return _blocks_to_matrix(blocks)


def _assemble_kdiff_2d(mesh):
    """Smooth difference kernel K* - K by the plain trapezoid rule."""
    n = mesh.n_nodes
    x, nrm, sp = mesh.nodes, mesh.normals, mesh.speed
    h = 2 * np.pi / n
    X = x[:, None, :].repeat(n, axis=1)
    Y = x[None, :, :].repeat(n, axis=0)
    NX = nrm[:, None, :].repeat(n, axis=1)
    NY = nrm[None, :, :].repeat(n, axis=0)
    idx = np.arange(n)
    Y[idx, idx] += 1.0  # avoid 0/0; diagonal replaced below
    blocks = kernels.kdiff_kernel(X, Y, NX, NY)
    # diagonal limit of the (N_x - N_y) term
    dnrm = _normal_derivative(mesh)
    dx = mesh.dnodes
    diag = (dnrm[:, None, :] * dx[:, :, None] - dnrm[:, :, None] * dx[:, None, :]) \
        / (4 * np.pi * sp[:, None, None] ** 2)
    blocks[idx, idx] = diag
    blocks = h * sp[None, :, None, None] * blocks
    return _blocks_to_matrix(blocks)


def _normal_derivative(mesh):
    # dN/dt for N = (c2', -c1')/|c'|
    dx, d2x, sp = mesh.dnodes, mesh.d2nodes, mesh.speed
    raw = np.stack([d2x[:, 1], -d2x[:, 0]], axis=1) / sp[:, None]
    return raw - mesh.normals * (np.sum(dx * d2x, axis=1) / sp**2)[:, None]


# ----------------------------------------------------------------------------
# 3D rule: per-target rotated polar quadrature
# ----------------------------------------------------------------------------

_THETA_PANELS = (0.0, 0.06, 0.2, 0.5, 1.0)
_THETA_PTS = (10, 10, 12, 12)
_N_PSI = 20
_STENCIL = 8


def _rotation_to(v):
    """Rotation matrices mapping e_z to unit vectors v, shape (m, 3, 3)."""
    v = np.atleast_2d(v)
    m = v.shape[0]
    c = v[:, 2]
    flip = c < -1.0 + 1e-12
    w = np.cross(np.broadcast_to([0.0, 0.0, 1.0], (m, 3)), v)
    K = np.zeros((m, 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -w[:, 2], w[:, 1]
    K[:, 1, 0], K[:, 1, 2] = w[:, 2], -w[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -w[:, 1], w[:, 0]
    denom = np.where(flip, 1.0, 1.0 + c)
    R = np.eye(3) + K + (K @ K) / denom[:, None, None]
    R[flip] = np.diag([1.0, -1.0, -1.0])
    return R


class PolarRule3D:
    """Cached per-target polar quadrature and interpolation data for a mesh."""

    def __init__(self, mesh):
        if mesh.dim != 3:
            raise ValueError("PolarRule3D needs a 3D mesh")
        self.mesh = mesh
        axes = mesh.extra["axes"]
        nt, nphi = mesh.n_theta, mesh.n_phi

        # reference polar grid (theta', psi)
        th_nodes, th_w = [], []
        for (a, b), npts in zip(zip(_THETA_PANELS[:-1], _THETA_PANELS[1:]), _THETA_PTS):
            xg, wg = leggauss(npts)
            th_nodes.append(0.5 * (a + b) * np.pi + 0.5 * (b - a) * np.pi * xg)
            th_w.append(0.5 * (b - a) * np.pi * wg)
        th = np.concatenate(th_nodes)
        thw = np.concatenate(th_w)
        psi = 2 * np.pi * np.arange(_N_PSI) / _N_PSI
        psw = 2 * np.pi / _N_PSI
        tt, pp = np.meshgrid(th, psi, indexing="ij")
        self.ref_dirs = np.stack([np.sin(tt) * np.cos(pp),
                                  np.sin(tt) * np.sin(pp),
                                  np.cos(tt)], axis=-1).reshape(-1, 3)
        self.ref_w = (np.sin(tt) * thw[:, None] * psw).reshape(-1)
        self.m_polar = self.ref_dirs.shape[0]

        # target unit-sphere directions from the grid
        u = mesh.gl_nodes
        phi = 2 * np.pi * np.arange(nphi) / nphi
        uu, pp2 = np.meshgrid(u, phi, indexing="ij")
        s = np.sqrt(1 - uu**2)
        self.targets_v = np.stack([s * np.cos(pp2), s * np.sin(pp2), uu],
                                  axis=-1).reshape(-1, 3)
        self.axes = axes
        self.rotations = _rotation_to(self.targets_v)

        # theta interpolation scaffolding (pole-crossing extension)
        theta_g = np.arccos(u)
        order = np.argsort(theta_g)
        k = _STENCIL
        top = -theta_g[order][:k][::-1]
        bot = 2 * np.pi - theta_g[order][-k:][::-1]
        self.theta_ext = np.concatenate([top, theta_g[order], bot])
        self.row_ext = np.concatenate([order[:k][::-1], order, order[-k:][::-1]])
        self.shift_ext = np.concatenate([np.ones(k), np.zeros(nt), np.ones(k)])

    def _interp_data(self, dirs):
        """Stencil rows, barycentric weights and phi targets for unit dirs."""
        k = _STENCIL
        theta_t = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
        phi_t = np.arctan2(dirs[:, 1], dirs[:, 0])
        idx0 = np.searchsorted(self.theta_ext, theta_t)
        lo = np.clip(idx0 - k // 2, 0, len(self.theta_ext) - k)
        sten = lo[:, None] + np.arange(k)[None, :]
        tg = self.theta_ext[sten]                        # (m, k)
        diff = tg[:, :, None] - tg[:, None, :]
        np.einsum("mjj->mj", diff)[:] = 1.0
        wb = 1.0 / np.prod(diff, axis=-1)
        dt = theta_t[:, None] - tg
        small = np.abs(dt) < 1e-13
        dt = np.where(small, 1.0, dt)
        lam = wb / dt
        lam = np.where(small.any(axis=1)[:, None], small.astype(float), lam)
        lam = lam / lam.sum(axis=1, keepdims=True)
        rows = self.row_ext[sten]
        phis = phi_t[:, None] + np.pi * self.shift_ext[sten]
        return rows, lam, phis

    def surface_at(self, dirs):
        """Points, normals, surface-measure factor for unit directions."""
        axes = self.axes
        y = dirs * axes
        g = axes.prod() * np.sqrt(np.sum((dirs / axes) ** 2, axis=-1))
        nr = y / axes**2
        nr = nr / np.linalg.norm(nr, axis=-1, keepdims=True)
        return y, nr, g

    def assemble(self, pair_kernel):
        """Dense matrix for int K(x, y) f(y) dsigma_y at the mesh nodes.

        pair_kernel(x, nx, Y, NY) -> (m, d, d) blocks acting on f(y).
        For azimuthally symmetric shapes (sphere, a = b spheroid) only one
        target per colatitude row is assembled; the others follow by
        rotating the blocks and rolling the phi columns.
        """
        mesh = self.mesh
        nt, nphi = mesh.n_theta, mesh.n_phi
        n = mesh.n_nodes
        axes = self.axes
        if abs(axes[0] - axes[1]) < 1e-15:
            ref_rows = np.zeros((nt, n, 3, 3))
            for it in range(nt):
                ref_rows[it] = self._assemble_row(pair_kernel, it * nphi)
            blocks = np.zeros((n, n, 3, 3))
            phi = 2 * np.pi * np.arange(nphi) / nphi
            for j in range(nphi):
                c, s = np.cos(phi[j]), np.sin(phi[j])
                Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
                rolled = np.roll(ref_rows.reshape(nt, nt, nphi, 3, 3), j, axis=2)
                blocks[j::nphi] = np.einsum(
                    "ab,tsbc,dc->tsad", Rz,
                    rolled.reshape(nt, n, 3, 3), Rz)
            return _blocks_to_matrix(blocks)
        blocks = np.zeros((n, n, 3, 3))
        for i in range(n):
            blocks[i] = self._assemble_row(pair_kernel, i)
        return _blocks_to_matrix(blocks)

    def _assemble_row(self, pair_kernel, i):
        mesh = self.mesh
        nt, nphi = mesh.n_theta, mesh.n_phi
        n = mesh.n_nodes
        qfreq = np.fft.fftfreq(nphi, 1.0 / nphi)
        nyq = nphi // 2
        dirs = self.ref_dirs @ self.rotations[i].T
        y, ny, g = self.surface_at(dirs)
        ker = pair_kernel(mesh.nodes[i], mesh.normals[i], y, ny)
        vals = (self.ref_w * g)[:, None, None] * ker     # (m, 3, 3)
        rows, lam, phis = self._interp_data(dirs)
        # accumulate phi-Fourier coefficients per theta row; the phase
        # differs per stencil slot because mirrored rows shift phi by pi.
        # conjugated so the ifft below gives the Dirichlet kernel in
        # (phi_j - phi*), i.e. interpolation at phi*
        A = np.zeros((nt, nphi, 3, 3), dtype=complex)
        for r in range(_STENCIL):
            ph = np.exp(-1j * np.outer(phis[:, r], qfreq))
            ph[:, nyq] = np.cos(nyq * phis[:, r])
            contrib = np.einsum("m,mq,mab->mqab", lam[:, r], ph, vals)
            np.add.at(A, rows[:, r], contrib)
        rowmat = np.fft.ifft(A, axis=1).real             # (nt, nphi, 3, 3)
        return rowmat.reshape(n, 3, 3)


def _polar_rule(mesh):
    rule = mesh.extra.get("_polar_rule")
    if rule is None:
        rule = PolarRule3D(mesh)
        mesh.extra["_polar_rule"] = rule
    return rule


def _assemble_slp_3d(mesh):
    rule = _polar_rule(mesh)

    def ker(x, nx, Y, NY):
        return kernels.stokeslet(x[None, :] - Y)

    return rule.assemble(ker)


def _assemble_np_3d(mesh):
    rule = _polar_rule(mesh)

    def ker(x, nx, Y, NY):
        return kernels.dlp_kernel(x[None, :], Y, NY)

    return rule.assemble(ker)


def _assemble_conormal_3d(mesh):
    rule = _polar_rule(mesh)

    def ker(x, nx, Y, NY):
        return kernels.slp_traction_kernel(x[None, :], Y, nx[None, :])

    return rule.assemble(ker)


# ----------------------------------------------------------------------------
# public assembly API
# ----------------------------------------------------------------------------

def assemble_slp(mesh):
    """Single-layer operator S_T restricted to dT.

    The 2D Kress-split rule is exactly self-adjoint in the w-weighted
    inner product by construction.  The 3D per-target polar rule is only
    approximately so; it is left unsymmetrized because the w-transpose of
    an interpolatory per-target rule is not itself a consistent rule.
    """
    if mesh.dim == 2:
        mat = _assemble_slp_2d(mesh)
    else:
        mat = _assemble_slp_3d(mesh)
    return OperatorMatrix(mat, "S", mesh)


def assemble_np(mesh):
    """The NP operator K_T (trace of D) and K*_T (trace of the conormal).

    K* is assembled independently from the conormal-trace kernel rather
    than taken as the weighted matrix transpose: the two differ by a
    bounded Cauchy-type operator (the trace operator of the conormal is
    not the L2 adjoint of the trace operator of D; only their weakly
    singular parts are transposes of each other).  The jump relations pin
    the kernels used here; see weighted_adjoint for the exact discrete
    adjoint when true duality is needed.
    """
    if mesh.dim == 2:
        K = OperatorMatrix(_assemble_np_2d(mesh), "K", mesh)
        Ks = OperatorMatrix(_assemble_conormal_2d(mesh), "K*", mesh)
    else:
        K = OperatorMatrix(_assemble_np_3d(mesh), "K", mesh)
        Ks = OperatorMatrix(_assemble_conormal_3d(mesh), "K*", mesh)
    return K, Ks


def assemble_kdiff(mesh):
    """The compact difference K* - K assembled from its explicit kernel (2D)."""
    if mesh.dim != 2:
        raise NotImplementedError("kdiff assembly is a 2D diagnostic")
    return OperatorMatrix(_assemble_kdiff_2d(mesh), "K*-K", mesh)


# ----------------------------------------------------------------------------
# dense solves
# ----------------------------------------------------------------------------

def solve_dense(matrix, rhs, tag="operator"):
    """Pivoted LU solve with a 1-norm condition estimate.

    Raises SingularOperatorError when cond > 1e14.  Returns (x, residual).
    """
    A = matrix.matrix if isinstance(matrix, OperatorMatrix) else np.asarray(matrix)
    if isinstance(matrix, OperatorMatrix):
        tag = matrix.tag
    b = np.asarray(rhs, dtype=float).reshape(-1)
    anorm = np.linalg.norm(A, 1)
    lu, piv = lu_factor(A)
    rcond, info = _lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < 1e-14:
        raise SingularOperatorError(
            f"operator '{tag}' numerically singular (rcond={rcond:.2e})")
    x = lu_solve((lu, piv), b)
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    return x, res


# ----------------------------------------------------------------------------
# off-surface evaluation
# ----------------------------------------------------------------------------

def upsample_density(mesh, values, factor):
    """Spectrally interpolate nodal values onto a refined mesh.

    Returns (fine_mesh, fine_values).  Used before plain quadrature at
    near-boundary targets, where accuracy is set by dist/spacing.
    """
    values = values.reshape(mesh.n_nodes, -1)
    if factor <= 1:
        return mesh, values
    if mesh.dim == 2:
        n_fine = int(np.ceil(mesh.n_nodes * factor / 2) * 2)
        fine = build_mesh(mesh.spec, n_fine, validate=False)
        P = _trig_interp_equi(mesh.n_nodes, n_fine)
        return fine, P @ values
    nt, nphi = mesh.n_theta, mesh.n_phi
    NT = int(np.ceil(nt * factor))
    NPHI = int(np.ceil(nphi * factor / 2) * 2)
    fine = build_mesh(mesh.spec, (NT, NPHI), validate=False)
    f = values.reshape(nt, nphi, -1)
    nc = f.shape[-1]
    # phi: exact zero-padded FFT upsample
    F = np.fft.fft(f, axis=1)
    Fpad = np.zeros((nt, NPHI, nc), dtype=complex)
    half = nphi // 2
    Fpad[:, :half] = F[:, :half]
    Fpad[:, NPHI - half:] = F[:, half:]
    Fpad[:, half] *= 0.5
    Fpad[:, NPHI - half] = Fpad[:, half]
    f_phi = np.fft.ifft(Fpad, axis=1).real * (NPHI / nphi)
    # theta: pole-crossing barycentric rows onto the fine colatitudes
    k = _STENCIL
    theta_g = np.arccos(mesh.gl_nodes)
    order = np.argsort(theta_g)
    theta_ext = np.concatenate([-theta_g[order][:k][::-1], theta_g[order],
                                2 * np.pi - theta_g[order][-k:][::-1]])
    row_ext = np.concatenate([order[:k][::-1], order, order[-k:][::-1]])
    shift_ext = np.concatenate([np.ones(k), np.zeros(nt), np.ones(k)])
    theta_f = np.arccos(fine.gl_nodes)
    out = np.zeros((NT, NPHI, nc))
    for i, th in enumerate(theta_f):
        i0 = int(np.clip(np.searchsorted(theta_ext, th) - k // 2, 0,
                         len(theta_ext) - k))
        tg = theta_ext[i0:i0 + k]
        wb = np.array([1.0 / np.prod(tg[j] - np.delete(tg, j)) for j in range(k)])
        dt = th - tg
        if np.any(np.abs(dt) < 1e-13):
            lam = (np.abs(dt) < 1e-13).astype(float)
        else:
            lam = wb / dt
            lam = lam / lam.sum()
        for j in range(k):
            row = f_phi[row_ext[i0 + j]]
            if shift_ext[i0 + j]:
                row = np.roll(row, NPHI // 2, axis=0)
            out[i] += lam[j] * row
    return fine, out.reshape(-1, nc)


def _trig_interp_equi(n, n_fine):
    t_src = np.linspace(0, 2 * np.pi, n, endpoint=False)
    t_dst = np.linspace(0, 2 * np.pi, n_fine, endpoint=False)
    from .geometry import trig_interp_matrix
    return trig_interp_matrix(t_src, t_dst)


def eval_offsurface(kind, mesh, density, points, upsample=1):
    """Evaluate S, D (velocity), Q, P (pressure) fields off the boundary.

    Plain quadrature; the kernels are smooth away from dT.  Points closer
    than 1e-12 to a node trigger a near-singular warning.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dmin = np.min(np.linalg.norm(pts[:, None, :] - mesh.nodes[None, :, :], axis=-1))
    if dmin < 1e-12:
        warnings.warn("evaluation point touches the boundary mesh; "
                      "accuracy degrades (no special quadrature)")
    src, dens = upsample_density(mesh, density, upsample)
    dens = dens.reshape(src.n_nodes, mesh.dim)
    r = pts[:, None, :] - src.nodes[None, :, :]
    w = src.weights
    if kind == "S":
        G = kernels.stokeslet(r)
        return np.einsum("pnjk,n,nk->pj", G, w, dens)
    if kind == "D":
        K = kernels.dlp_kernel(pts[:, None, :], src.nodes[None, :, :],
                               src.normals[None, :, :])
        return np.einsum("pnjk,n,nk->pj", K, w, dens)
    if kind == "Q":
        th = kernels.pressurelet(r)
        return np.einsum("pnk,n,nk->p", th, w, dens)
    if kind == "P":
        ker = kernels.dlp_pressure_kernel(pts[:, None, :], src.nodes[None, :, :],
                                          src.normals[None, :, :])
        return np.einsum("pnk,n,nk->p", ker, w, dens)
    raise ValueError(f"unknown field kind {kind!r}")


def eval_offsurface_grad(kind, mesh, density, points, upsample=1):
    """Gradients d_l (field)^j as (p, d, d) for kind S or D."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    src, dens = upsample_density(mesh, density, upsample)
    dens = dens.reshape(src.n_nodes, mesh.dim)
    w = src.weights
    if kind == "S":
        gG = kernels.grad_stokeslet(pts[:, None, :] - src.nodes[None, :, :])
        return np.einsum("pnljk,n,nk->plj", gG, w, dens)
    raise ValueError("gradient evaluation implemented for S only")


# ----------------------------------------------------------------------------
# jump relations
# ----------------------------------------------------------------------------

def _neville_to_zero(ts, vals):
    """Neville extrapolation of vals(t) to t = 0 along axis 0."""
    T = [v.astype(float) for v in vals]
    ts = list(ts)
    m = len(ts)
    for level in range(1, m):
        for i in range(m - level):
            t0, t1 = ts[i], ts[i + level]
            T[i] = (t0 * T[i + 1] - t1 * T[i]) / (t0 - t1)
    return T[0]


def verify_jumps(mesh, density, t_levels=(1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4),
                 targets=None):
    """Check the trace formulas for D and for the conormal of (S, Q).

    Evaluates the fields at x +- t N_x, Richardson-extrapolates t -> 0 and
    compares against (-+ 1/2 I + K)[phi] and (+- 1/2 I + K*)[phi].  The
    evaluation upsamples the density so the near-boundary quadrature error
    stays below the extrapolation error.  Returns a report dict.
    """
    d = mesh.dim
    density = density.reshape(mesh.n_nodes, d)
    if targets is None:
        targets = np.arange(0, mesh.n_nodes, max(1, mesh.n_nodes // 32))
    x = mesh.nodes[targets]
    nx = mesh.normals[targets]

    t_min = min(t_levels)
    if mesh.dim == 2:
        spacing = mesh.area / mesh.n_nodes
        factor = max(1.0, 3.5 * spacing / t_min)
    else:
        spacing = np.sqrt(mesh.area / mesh.n_nodes)
        factor = max(1.0, 1.2 * spacing / t_min)
    src, dens = upsample_density(mesh, density, factor)

    K, Kstar = assemble_np(mesh)
    phi = density.reshape(-1)
    d_plus_ref = (-0.5 * phi + K.matrix @ phi).reshape(-1, d)[targets]
    d_minus_ref = (0.5 * phi + K.matrix @ phi).reshape(-1, d)[targets]
    s_plus_ref = (0.5 * phi + Kstar.matrix @ phi).reshape(-1, d)[targets]
    s_minus_ref = (-0.5 * phi + Kstar.matrix @ phi).reshape(-1, d)[targets]

    def fields(side):
        Dv, Tv, Sv = [], [], []
        for t in t_levels:
            pts = x + side * t * nx
            Dv.append(eval_offsurface("D", src, dens, pts))
            gS = eval_offsurface_grad("S", src, dens, pts)
            Q = eval_offsurface("Q", src, dens, pts)
            Tv.append(-Q[:, None] * nx + np.einsum("plj,pl->pj", gS, nx))
            Sv.append(eval_offsurface("S", src, dens, pts))
        return (_neville_to_zero(t_levels, Dv), _neville_to_zero(t_levels, Tv),
                _neville_to_zero(t_levels, Sv))

    Dp, Tp, Sp = fields(+1.0)
    Dm, Tm, Sm = fields(-1.0)
    return {
        "dlp_jump_plus": float(np.max(np.abs(Dp - d_plus_ref))),
        "dlp_jump_minus": float(np.max(np.abs(Dm - d_minus_ref))),
        "conormal_jump_plus": float(np.max(np.abs(Tp - s_plus_ref))),
        "conormal_jump_minus": float(np.max(np.abs(Tm - s_minus_ref))),
        "slp_continuity": float(np.max(np.abs(Sp - Sm))),
        "t_levels": tuple(t_levels),
        "upsample_factor": float(factor),
    }


def np_eigen_residual(mesh, K=None):
    """max_l of || (K - 1/2 I) e_l ||_L2, the constant-field eigen-relation."""
    if K is None:
        K, _ = assemble_np(mesh)
    d = mesh.dim
    worst = 0.0
    for ell in range(d):
        e = np.zeros((mesh.n_nodes, d))
        e[:, ell] = 1.0
        r = K.apply(e) - 0.5 * e
        worst = max(worst, l2_norm(mesh, r))
    return worst
