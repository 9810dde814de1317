"""Bilinear quad plane-stress FE: coarse sparse solves and a matrix-free
fine-mesh conjugate-gradient solver.

Grids are nx x ny square elements of size h; node (i, j) sits at
(x, y) = (j h, i h) with dofs (2 id, 2 id + 1) for id = i (nx+1) + j.
The fine-mesh operator never forms a matrix: a single solid element
stiffness is scaled per element, and the apply kernel runs under numba
(pure-numpy fallback via DEHOMOG_PURE_NUMPY).
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .backend import USE_NUMBA, njit

_GP = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) / np.sqrt(3.0)


def _b_matrices(h: float) -> np.ndarray:
    """Strain-displacement matrices (4 gauss points, 3 x 8) for a square element."""
    B = np.zeros((4, 3, 8))
    for g, (xi, eta) in enumerate(_GP):
        # dN/dxi, dN/deta for nodes (-1,-1), (1,-1), (1,1), (-1,1)
        dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        dx = dxi * 2.0 / h
        dy = deta * 2.0 / h
        for a in range(4):
            B[g, 0, 2 * a] = dx[a]
            B[g, 1, 2 * a + 1] = dy[a]
            B[g, 2, 2 * a] = dy[a]
            B[g, 2, 2 * a + 1] = dx[a]
    return B


def element_stiffness(C, h: float) -> np.ndarray:
    """8x8 stiffness for constitutive matrices C of shape (..., 3, 3)."""
    B = _b_matrices(h)
    detj = (h / 2.0) ** 2
    return np.einsum("gai,...ab,gbj->...ij", B, np.asarray(C), B) * detj


def element_dofs(nx: int, ny: int) -> np.ndarray:
    """(nel, 8) dof indices, elements ordered row-major (i * nx + j)."""
    j, i = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = i * (nx + 1) + j
    nodes = np.stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1], axis=-1).reshape(-1, 4)
    dofs = np.empty((nodes.shape[0], 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * nodes
    dofs[:, 1::2] = 2 * nodes + 1
    return dofs


def assemble(Ke: np.ndarray, edof: np.ndarray, ndof: int) -> sparse.csc_matrix:
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    K = sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(ndof, ndof))
    return K.tocsc()


def solve_dense_bc(K: sparse.csc_matrix, f: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Direct sparse solve with fixed dofs eliminated; raises on singularity."""
    ndof = f.shape[0]
    free = np.setdiff1d(np.arange(ndof), fixed)
    u = np.zeros(ndof)
    Kff = K[np.ix_(free, free)]
    try:
        lu = splu(Kff.tocsc())
    except RuntimeError as exc:
        raise RuntimeError(f"singular system (insufficient constraints?): {exc}") from exc
    u[free] = lu.solve(f[free])
    if not np.all(np.isfinite(u)):
        raise RuntimeError("singular system: non-finite displacements")
    return u


# ---------------------------------------------------------------------------
# Matrix-free operator for the fine mesh
# ---------------------------------------------------------------------------

@njit(cache=True)
def _apply_scaled(u, out, scale, Ke0, nx, ny):  # pragma: no cover
    out[:] = 0.0
    for i in range(ny):
        base = i * (nx + 1)
        for j in range(nx):
            n0 = base + j
            d0 = 2 * n0
            d1 = 2 * (n0 + 1)
            d2 = 2 * (n0 + nx + 2)
            d3 = 2 * (n0 + nx + 1)
            se = scale[i * nx + j]
            ue0 = u[d0]; ue1 = u[d0 + 1]
            ue2 = u[d1]; ue3 = u[d1 + 1]
            ue4 = u[d2]; ue5 = u[d2 + 1]
            ue6 = u[d3]; ue7 = u[d3 + 1]
            for a in range(8):
                r = (Ke0[a, 0] * ue0 + Ke0[a, 1] * ue1 + Ke0[a, 2] * ue2
                     + Ke0[a, 3] * ue3 + Ke0[a, 4] * ue4 + Ke0[a, 5] * ue5
                     + Ke0[a, 6] * ue6 + Ke0[a, 7] * ue7) * se
                if a < 2:
                    out[d0 + a] += r
                elif a < 4:
                    out[d1 + a - 2] += r
                elif a < 6:
                    out[d2 + a - 4] += r
                else:
                    out[d3 + a - 6] += r
    return out


class MatrixFreeOperator:
    """K u for a grid of identical elements scaled per element.

    scale is typically alpha + (1 - alpha) * rho for a binary density rho.
    Fixed dofs are handled by projection (rows/cols zeroed, unit diagonal).
    """

    def __init__(self, nx: int, ny: int, Ke0: np.ndarray, scale: np.ndarray,
                 fixed: np.ndarray):
        self.nx = nx
        self.ny = ny
        self.Ke0 = np.ascontiguousarray(Ke0, dtype=np.float64)
        self.scale = np.ascontiguousarray(scale, dtype=np.float64).ravel()
        self.ndof = 2 * (nx + 1) * (ny + 1)
        self.free_mask = np.ones(self.ndof, dtype=bool)
        self.free_mask[fixed] = False
        self._edof = None if USE_NUMBA else element_dofs(nx, ny)
        self._buf = np.empty(self.ndof)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        v = np.where(self.free_mask, u, 0.0)
        if USE_NUMBA:
            out = _apply_scaled(v, self._buf, self.scale, self.Ke0, self.nx, self.ny)
            out = out.copy()
        else:
            ue = v[self._edof]
            fe = (ue @ self.Ke0.T) * self.scale[:, None]
            out = np.zeros(self.ndof)
            np.add.at(out, self._edof.ravel(), fe.ravel())
        out[~self.free_mask] = u[~self.free_mask]
        return out

    def diagonal(self) -> np.ndarray:
        d = np.zeros(self.ndof)
        edof = self._edof if self._edof is not None else element_dofs(self.nx, self.ny)
        np.add.at(d, edof.ravel(), np.outer(self.scale, np.diag(self.Ke0)).ravel())
        d[~self.free_mask] = 1.0
        return d


def conjugate_gradient(op: MatrixFreeOperator, f: np.ndarray, rtol: float = 1e-8,
                       max_iter: int = 20000):
    """Jacobi-preconditioned CG; returns (u, iterations, relative residual)."""
    b = np.where(op.free_mask, f, 0.0)
    invd = 1.0 / op.diagonal()
    u = np.zeros_like(b)
    r = b.copy()
    z = invd * r
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return u, 0, 0.0
    for it in range(1, max_iter + 1):
        Kp = op.matvec(p)
        alpha = rz / (p @ Kp)
        u += alpha * p
        r -= alpha * Kp
        res = np.linalg.norm(r) / bnorm
        if res < rtol:
            return u, it, res
        z = invd * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return u, max_iter, np.linalg.norm(r) / bnorm
