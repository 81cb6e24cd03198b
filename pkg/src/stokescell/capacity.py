"""Kernel basis of -1/2 I + K*, the matrix A_T and the permeability M.

The basis densities phi_j and constant vectors a_j solve

    S[phi_j] + a_j = 0 on dT,     int_dT phi_j = e_j.

Discretely this bordered system is singular in one direction because the
Stokes single layer annihilates the normal field (S[N] = 0, Q[N] = 1_T).
The system is therefore augmented with a slack multiple of N in the range
and one gauge row fixing the interior single-layer pressure to zero at the
origin; kernel elements of -1/2 I + K* have vanishing interior pressure, so
the gauge selects exactly the basis with the normalization above.

The permeability is M = A_T^{-1} for d >= 3 and M = 4 pi I for d = 2.

Note on the 2D rescaling law: rescaling the hole by r shifts the matrix by
A_{rT} = A_T - (log r)/(4 pi) I.  (Closed form for the disk of radius a:
A = (1 - 2 log a)/(8 pi) I, from the uniform kernel density e_j/(2 pi a).)
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import BoundaryMesh, ShapeSpec, build_mesh
from .nystrom import (OperatorMatrix, assemble_np, assemble_slp, l2_inner,
                      solve_dense, weight_vector)

RESCALE_COEF = -1.0 / (4.0 * np.pi)


@dataclass
class CapacityResult:
    """Kernel basis, vectors a_j, matrix A_T and permeability M."""

    mesh: BoundaryMesh
    basis: np.ndarray          # (d, n, d): basis[j] = phi_j nodal values
    A: np.ndarray              # (d, d), columns a_j
    M: np.ndarray              # (d, d)
    slp: OperatorMatrix
    gauge_slack: np.ndarray    # per-j slack coefficient, ~0
    extra: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def det_A(self):
        return float(np.linalg.det(self.A))

    def to_json_dict(self):
        return {
            "A_T": self.A.tolist(),
            "M": self.M.tolist(),
            "det_A_T": self.det_A,
            "dim": self.dim,
        }


def _augmented_system(mesh, slp):
    n, d = mesh.n_nodes, mesh.dim
    N = n * d
    A = np.zeros((N + d + 1, N + d + 1))
    A[:N, :N] = slp.matrix
    # constant columns a and the normal slack column
    for k in range(d):
        A[k:N:d, N + k] = 1.0
    A[:N, N + d] = mesh.normals.reshape(-1)
    # moment rows: int phi = e_j
    w = np.repeat(mesh.weights, d)
    for k in range(d):
        A[N + k, k:N:d] = mesh.weights
    # gauge row: single-layer pressure at the origin (inside T by A1)
    theta0 = kernels.pressurelet(-mesh.nodes)          # theta(0 - y)
    A[N + d, :N] = (mesh.weights[:, None] * theta0).reshape(-1)
    return A


def solve_kernel_basis(mesh, slp=None, deflation_rtol=1e-9):
    """Solve for the d pairs (phi_j, a_j) and assemble A_T and M.

    In 2D the kernel of -1/2 I + K contains the rigid rotation besides the
    constants, so the augmented system retains one exact null pair even
    after the normal-slack/pressure-gauge rows; any remaining near-null
    pairs are detected by SVD and deflated (the solution is gauged to be
    orthogonal to the null directions).  Adding a kernel element of
    -1/2 I + K* to phi_j leaves a_j, A_T and every downstream identity
    unchanged, so the gauge is a free normalization.
    """
    n, d = mesh.n_nodes, mesh.dim
    if slp is None:
        slp = assemble_slp(mesh)
    A = _augmented_system(mesh, slp)
    N = n * d
    m = A.shape[0]
    rhs = np.zeros((m, d))
    for j in range(d):
        rhs[N + j, j] = 1.0

    U, sv, Vt = np.linalg.svd(A)
    k = int(np.sum(sv < deflation_rtol * sv[0]))
    if d == 2:
        # the rotation field rides along in ker(-1/2 I + K): the augmented
        # system keeps exactly one structural null pair; its discrete
        # singular value is only quadrature-small, so force the deflation
        k = max(k, 1)
    from scipy.linalg import lu_factor, lu_solve
    if k:
        B = np.zeros((m + k, m + k))
        B[:m, :m] = A
        B[:m, m:] = U[:, m - k:]
        B[m:, :m] = Vt[m - k:, :]
        rhs = np.vstack([rhs, np.zeros((k, d))])
        sol = lu_solve(lu_factor(B), rhs)
    else:
        sol = lu_solve(lu_factor(A), rhs)
    basis = np.stack([sol[:N, j].reshape(n, d) for j in range(d)])
    AT = sol[N:N + d, :]           # column j = a_j
    slack = sol[N + d, :]
    if d == 2:
        M = 4.0 * np.pi * np.eye(2)
    else:
        M = np.linalg.inv(AT)
    return CapacityResult(mesh=mesh, basis=basis, A=AT, M=M, slp=slp,
                          gauge_slack=slack,
                          extra={"deflated": k, "sigma_min": float(sv[-1]),
                                 "sigma_max": float(sv[0])})


def kernel_dimension(mesh, K=None, rel_tol=1e-6):
    """Count singular values of -1/2 I + K below rel_tol x median."""
    if K is None:
        K, _ = assemble_np(mesh)
    mat = K.matrix - 0.5 * np.eye(K.matrix.shape[0])
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv < rel_tol * np.median(sv)))


def project(mesh, result, psi):
    """Split psi into its Pi_0 (constant) and Pi_1 (range) parts.

    Returns (coeffs, pi1) where coeffs[k] = <phi_k, psi>_{L2(dT)} and
    pi1 = psi - sum_k coeffs[k] e_k as nodal values.
    """
    psi = psi.reshape(mesh.n_nodes, mesh.dim)
    coeffs = np.array([l2_inner(mesh, result.basis[k], psi)
                       for k in range(mesh.dim)])
    pi1 = psi - coeffs[None, :]
    return coeffs, pi1


def projection_matrices(mesh, result):
    """Dense Pi_0 and Pi_1 acting on node-major density vectors."""
    n, d = mesh.n_nodes, mesh.dim
    N = n * d
    P0 = np.zeros((N, N))
    w = mesh.weights
    for k in range(d):
        row = (w[:, None] * result.basis[k]).reshape(-1)
        P0[k::d, :] += row[None, :]
    return P0, np.eye(N) - P0


def rescaling_law_check(spec, radii, n=256, base_result=None):
    """2D rescaling: A_{rT} = A_T - (log r)/(4 pi) I for each scale r.

    Returns a report with the computed shifts and the worst deviation.
    """
    if spec.dim != 2:
        raise ValueError("the rescaling law is a 2D statement")
    base = base_result or solve_kernel_basis(build_mesh(spec, n))
    rows = []
    worst = 0.0
    for r in radii:
        res_r = solve_kernel_basis(build_mesh(spec.rescaled(r), n))
        shift = res_r.A - base.A
        predicted = RESCALE_COEF * np.log(r) * np.eye(2)
        dev = float(np.max(np.abs(shift - predicted)))
        worst = max(worst, dev)
        rows.append({"r": float(r), "shift": shift.tolist(),
                     "predicted": predicted.tolist(), "deviation": dev})
    return {"rows": rows, "max_deviation": worst}


def energy_identity_check(result):
    """Evaluate the exterior Dirichlet energy of the local solutions.

    Two paths for the matrix int grad w_i : grad w_k (d = 3):
    the boundary form -m_is m_kl <phi_s, S[phi_l]> and M itself.
    Returns (boundary_form, M, relative deviation).
    """
    mesh = result.mesh
    d = mesh.dim
    if d != 3:
        raise ValueError("energy identity applies to d >= 3")
    G = np.zeros((d, d))
    for s in range(d):
        Sphi = result.slp.apply(result.basis[s])
        for ell in range(d):
            G[s, ell] = l2_inner(mesh, result.basis[ell], Sphi)
    boundary_form = -result.M @ G @ result.M.T
    rel = np.linalg.norm(boundary_form - result.M) / np.linalg.norm(result.M)
    return boundary_form, result.M, float(rel)


def capacity_invariants(result, sym_tol=1e-8, pd_tol=1e-10):
    """Symmetry / positivity / normalization report used by the CLI."""
    mesh = result.mesh
    d = mesh.dim
    sym = float(np.max(np.abs(result.A - result.A.T)))
    eigs = np.linalg.eigvalsh(0.5 * (result.A + result.A.T))
    moments = np.array([mesh.weights @ result.basis[j] for j in range(d)])
    mom_err = float(np.max(np.abs(moments - np.eye(d))))
    _, Kstar = assemble_np(mesh)
    kernel_res = max(
        float(np.max(np.abs(Kstar.apply(result.basis[j]) - 0.5 * result.basis[j])))
        for j in range(d))
    report = {
        "symmetry": sym,
        "symmetric": sym <= sym_tol,
        "eigenvalues": eigs.tolist(),
        "positive_definite": bool(eigs.min() > pd_tol) if d == 3 else None,
        "moment_error": mom_err,
        "kernel_residual": kernel_res,
        "gauge_slack": float(np.max(np.abs(result.gauge_slack))),
    }
    return report


def disk_capacity_exact(radius):
    """Closed form for the 2D disk: A = (1 - 2 log a)/(8 pi) I."""
    return (1.0 - 2.0 * np.log(radius)) / (8.0 * np.pi) * np.eye(2)


def sphere_capacity_exact(radius):
    """Stokes-drag value for the sphere: A = I/(6 pi a), M = 6 pi a I."""
    return np.eye(3) / (6.0 * np.pi * radius)
