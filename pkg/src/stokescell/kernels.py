"""Free-space Stokes kernels (unit viscosity).

All kernels are vectorized over leading axes: an argument of shape
(..., d) produces (..., d, d) matrices / (..., d) vectors.  The
double-layer kernel is returned with its Cauchy-type antisymmetric part
separated from the two weakly singular parts, because the Nystrom module
applies different quadrature rules to each.
"""

import numpy as np

# ball volumes: varpi_2 = pi, varpi_3 = 4 pi / 3
_BALL_VOL = {2: np.pi, 3: 4.0 * np.pi / 3.0}


def ball_volume(d):
    return _BALL_VOL[d]


def stokeslet(x):
    """Kelvin matrix Gamma(x), shape (..., d, d).

    d = 2: (1/4pi)(log|x| I - xhat xhat^T)
    d >= 3: -(1/(2d(d-2)w_d)) (I/|x|^{d-2} + (d-2) x x^T/|x|^d)
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise ZeroDivisionError("stokeslet evaluated at x = 0")
    eye = np.eye(d)
    xx = x[..., :, None] * x[..., None, :]
    if d == 2:
        logr = 0.5 * np.log(r2)
        return (logr[..., None, None] * eye - xx / r2[..., None, None]) / (4 * np.pi)
    r = np.sqrt(r2)
    coef = -1.0 / (2 * d * (d - 2) * _BALL_VOL[d])
    return coef * (eye / r[..., None, None] ** (d - 2)
                   + (d - 2) * xx / r[..., None, None] ** d)


def pressurelet(x):
    """Pressure vector theta(x) = -x / (d w_d |x|^d), shape (..., d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise ZeroDivisionError("pressurelet evaluated at x = 0")
    rd = r2 ** (d / 2.0)
    return -x / (d * _BALL_VOL[d] * rd[..., None])


def laplace_fundamental(x):
    """Gamma_Delta(x): -log|x|/2pi (d=2), |x|^{2-d}/(d(d-2)w_d) (d=3)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r = np.linalg.norm(x, axis=-1)
    if d == 2:
        return -np.log(r) / (2 * np.pi)
    return r ** (2 - d) / (d * (d - 2) * _BALL_VOL[d])


def grad_stokeslet(x):
    """d Gamma: tensor of shape (..., d, d, d) with entries d_l Gamma_k^j.

    Index order is [..., l, j, k] (derivative first).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    r = np.sqrt(r2)
    eye = np.eye(d)
    # delta_jk x^l, delta_jl x^k, delta_kl x^j as (..., l, j, k)
    d_jk_xl = eye * x[..., :, None, None]
    d_jl_xk = eye[:, :, None] * x[..., None, None, :]
    d_kl_xj = eye[:, None, :] * x[..., None, :, None]
    xxx = x[..., :, None, None] * x[..., None, :, None] * x[..., None, None, :]
    if d == 2:
        pref = 1.0 / (4 * np.pi * r2[..., None, None, None])
        return pref * (d_jk_xl - d_jl_xk - d_kl_xj + 2 * xxx / r2[..., None, None, None])
    coef = -(d - 2) / (2 * d * (d - 2) * _BALL_VOL[d])
    pref = coef / (r[..., None, None, None] ** d)
    return pref * (-d_jk_xl + d_jl_xk + d_kl_xj - d * xxx / r2[..., None, None, None])


def grad_pressurelet(x):
    """d theta: (..., l, k) with entries d_l theta_k."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    rd = r2 ** (d / 2.0)
    eye = np.eye(d)
    xx = x[..., :, None] * x[..., None, :]
    return (-eye / rd[..., None, None]
            + d * xx / (rd * r2)[..., None, None]) / (d * _BALL_VOL[d])


def dlp_kernel(x, y, ny, split=False):
    """Double-layer kernel K_jk(x, y) for the modified conormal.

    Acts on a momentum density phi(y): (D phi)^j = int K_jk phi^k dsigma_y.
    With split=True returns (cauchy, weak): the antisymmetric Cauchy-type
    term and the sum of the two weakly singular terms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ny = np.asarray(ny, dtype=float)
    d = x.shape[-1]
    r = x - y
    r2 = np.sum(r * r, axis=-1)
    if np.any(r2 == 0.0):
        raise ZeroDivisionError("dlp_kernel on the diagonal")
    rd = r2 ** (d / 2.0)
    nr = np.sum(ny * r, axis=-1)
    rr = r[..., :, None] * r[..., None, :]
    eye = np.eye(d)
    cauchy = (ny[..., None, :] * r[..., :, None]
              - r[..., None, :] * ny[..., :, None]) / (2 * d * _BALL_VOL[d] * rd[..., None, None])
    weak = (-(nr / (2 * _BALL_VOL[d]))[..., None, None] * rr / (rd * r2)[..., None, None]
            - (nr / (2 * d * _BALL_VOL[d]))[..., None, None] * eye / rd[..., None, None])
    if split:
        return cauchy, weak
    return cauchy + weak


def adjoint_dlp_kernel(x, y, nx):
    """Adjoint kernel K*_ik(x, y) = K_ki(y, x); acts on phi(y)."""
    K = dlp_kernel(y, x, nx)
    return np.swapaxes(K, -1, -2)


def kdiff_kernel(x, y, nx, ny):
    """(K* - K)(x, y): the explicit compact-difference kernel.

    On a C^{1,alpha} boundary each term carries N_x - N_y or <N_x + N_y, r>
    factors and the kernel is weakly singular; on a flat piece it vanishes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = x - y
    d = x.shape[-1]
    r2 = np.sum(r * r, axis=-1)
    rd = r2 ** (d / 2.0)
    nsum_r = np.sum((nx + ny) * r, axis=-1)
    ndiff = nx - ny
    rr = r[..., :, None] * r[..., None, :]
    eye = np.eye(d)
    t1 = (nsum_r / (2 * _BALL_VOL[d]))[..., None, None] * rr / (rd * r2)[..., None, None]
    t2 = (nsum_r / (2 * d * _BALL_VOL[d]))[..., None, None] * eye / rd[..., None, None]
    t3 = (ndiff[..., None, :] * r[..., :, None]
          - ndiff[..., :, None] * r[..., None, :]) / (2 * d * _BALL_VOL[d] * rd[..., None, None])
    return t1 + t2 + t3


def dlp_pressure_kernel(x, y, ny):
    """Pressure kernel of the double layer, scalar row against phi^k.

    P[phi](x) = int N_y^l (d_l theta_k)(x - y) phi^k, returned as (..., k).
    """
    gt = grad_pressurelet(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return np.einsum("...l,...lk->...k", ny, gt)


def slp_traction_kernel(x, y, nx):
    """Modified conormal of the single-layer pair (S, Q) at x with normal nx.

    Entries (..., i, k): -theta_k(x-y) nx^i + nx^j d_j Gamma_k^i (x-y).
    This is the adjoint double-layer kernel written directly; kept for
    cross-checks against adjoint_dlp_kernel.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = x - y
    th = pressurelet(r)
    gG = grad_stokeslet(r)  # (..., l, j, k) = d_l Gamma_k^j
    t = np.einsum("...j,...jik->...ik", nx, gG)
    return -th[..., None, :] * nx[..., :, None] + t
