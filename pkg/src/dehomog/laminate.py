"""Closed-form rank-2 laminate stiffness (plane stress, Voigt 3x3).

The effective tensor is built by sequential lamination: an inner rank-1
laminate of solid and weak material (relative solid thickness mu2, layer
normal x) is laminated with solid at the coarser scale (thickness mu1,
layer normal y), then rotated by the lamination angle.  The weak phase
carries alpha_void times the solid stiffness, which keeps the tensor SPD
and continuous down to the void limit.

All routines are vectorized over trailing element axes and accept complex
input, so parameter derivatives can be taken with a complex step.
"""

from __future__ import annotations

import numpy as np

VOID_STIFFNESS = 1e-9


def isotropic_tensor(E=1.0, nu=0.3):
    """Plane-stress isotropic constitutive matrix (engineering shear)."""
    f = E / (1.0 - nu * nu)
    return f * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])


def _inv2(M):
    """Inverse of (..., 2, 2) arrays, complex-safe."""
    a = M[..., 0, 0]
    b = M[..., 0, 1]
    c = M[..., 1, 0]
    d = M[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(M)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


def laminate(C_a, C_b, frac_a, normal_axis: int):
    """Effective tensor of a layered mix of C_a (fraction frac_a) and C_b.

    normal_axis 0/1 selects the layer normal (x or y).  Standard laminate
    algebra: tangential strain is shared, interface tractions are shared;
    the per-phase strain jump is eliminated analytically.
    """
    frac_a = np.asarray(frac_a)
    shape = np.broadcast_shapes(frac_a.shape, C_a.shape[:-2], C_b.shape[:-2])
    dtype = np.result_type(C_a.dtype, C_b.dtype, frac_a.dtype)
    # Voigt components: t = tangential strain index, s = traction indices
    t, s = (1, (0, 2)) if normal_axis == 0 else (0, (1, 2))
    Ca = np.broadcast_to(C_a, shape + (3, 3))
    Cb = np.broadcast_to(C_b, shape + (3, 3))
    m = np.broadcast_to(frac_a, shape)[..., None, None]

    A_ss = Ca[..., s, :][..., :, s]
    B_ss = Cb[..., s, :][..., :, s]
    A_st = Ca[..., s, :][..., :, [t]]
    B_st = Cb[..., s, :][..., :, [t]]
    iA = _inv2(A_ss)
    iB = _inv2(B_ss)
    M = m * iA + (1.0 - m) * iB
    R = m * (iA @ A_st) + (1.0 - m) * (iB @ B_st)
    iM = _inv2(M)
    # tangential-tangential part with the strain jump condensed out
    Q = (m * (Ca[..., [t], :][..., :, [t]] - np.swapaxes(A_st, -1, -2) @ iA @ A_st)
         + (1.0 - m) * (Cb[..., [t], :][..., :, [t]] - np.swapaxes(B_st, -1, -2) @ iB @ B_st))

    C = np.zeros(shape + (3, 3), dtype=dtype)
    tt = Q + np.swapaxes(R, -1, -2) @ iM @ R
    ts = np.swapaxes(iM @ R, -1, -2)
    C[..., t, t] = tt[..., 0, 0]
    for a, ia in enumerate(s):
        C[..., t, ia] = ts[..., 0, a]
        C[..., ia, t] = ts[..., 0, a]
        for b, ib in enumerate(s):
            C[..., ia, ib] = iM[..., a, b]
    return C


def rotate_tensor(C, theta):
    """Rotate a Voigt stiffness tensor by theta (engineering shear convention)."""
    theta = np.asarray(theta)
    c = np.cos(theta)
    s = np.sin(theta)
    zero = np.zeros_like(c)
    T = np.stack([
        np.stack([c * c, s * s, -2.0 * c * s], axis=-1),
        np.stack([s * s, c * c, 2.0 * c * s], axis=-1),
        np.stack([c * s, -c * s, c * c - s * s], axis=-1),
    ], axis=-2)
    return T @ C @ np.swapaxes(T, -1, -2)


def rank2_effective_tensor(mu1, mu2, theta, E=1.0, nu=0.3, alpha_void=VOID_STIFFNESS):
    """Rank-2 laminate stiffness rotated to the global frame.

    mu1 is the relative thickness of the coarse-scale layers running along
    theta; mu2 the fine-scale layers orthogonal to them.  At
    mu1 = mu2 = 1 the isotropic solid tensor is recovered exactly.
    """
    mu1 = np.asarray(mu1)
    mu2 = np.asarray(mu2)
    dtype = np.result_type(mu1.dtype, mu2.dtype, np.asarray(theta).dtype, np.float64)
    C_solid = isotropic_tensor(E, nu).astype(dtype)
    C_weak = (alpha_void * isotropic_tensor(E, nu)).astype(dtype)
    inner = laminate(C_solid, C_weak, mu2, normal_axis=0)
    local = laminate(C_solid, inner, mu1, normal_axis=1)
    return rotate_tensor(local, theta)


def rank2_tensor_derivatives(mu1, mu2, theta, E=1.0, nu=0.3, alpha_void=VOID_STIFFNESS,
                             step=1e-30):
    """(C, dC/dmu1, dC/dmu2, dC/dtheta) via complex step; machine precision."""
    C = rank2_effective_tensor(mu1, mu2, theta, E, nu, alpha_void)
    ih = 1j * step
    args = dict(E=E, nu=nu, alpha_void=alpha_void)
    d1 = rank2_effective_tensor(mu1 + ih, mu2, theta, **args).imag / step
    d2 = rank2_effective_tensor(mu1, mu2 + ih, theta, **args).imag / step
    dt = rank2_effective_tensor(mu1, mu2, theta + ih, **args).imag / step
    return C, d1, d2, dt
