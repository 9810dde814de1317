"""Binary image morphology: Zhang-Suen thinning, exact EDT, disk dilation.

The thinning and distance-transform inner loops run as numba kernels by
default; DEHOMOG_PURE_NUMPY=1 selects numpy/scipy equivalents producing
identical results (both EDT routes are exact, so squared distances agree
bit for bit).
"""

from __future__ import annotations

import numpy as np

from .backend import USE_NUMBA, njit

__all__ = ["skeletonize", "dilate_disk", "distance_transform", "paint_disks"]


# ---------------------------------------------------------------------------
# Zhang-Suen thinning
# ---------------------------------------------------------------------------

@njit(cache=True)
def _thin_pass(img, sub):  # pragma: no cover - exercised through skeletonize
    """One Zhang-Suen subiteration (sub = 0 or 1). Returns changed count."""
    ny, nx = img.shape
    out = img.copy()
    changed = 0
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            if img[i, j] == 0:
                continue
            p2 = img[i - 1, j]
            p3 = img[i - 1, j + 1]
            p4 = img[i, j + 1]
            p5 = img[i + 1, j + 1]
            p6 = img[i + 1, j]
            p7 = img[i + 1, j - 1]
            p8 = img[i, j - 1]
            p9 = img[i - 1, j - 1]
            b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
            if b < 2 or b > 6:
                continue
            a = 0
            if p2 == 0 and p3 == 1:
                a += 1
            if p3 == 0 and p4 == 1:
                a += 1
            if p4 == 0 and p5 == 1:
                a += 1
            if p5 == 0 and p6 == 1:
                a += 1
            if p6 == 0 and p7 == 1:
                a += 1
            if p7 == 0 and p8 == 1:
                a += 1
            if p8 == 0 and p9 == 1:
                a += 1
            if p9 == 0 and p2 == 1:
                a += 1
            if a != 1:
                continue
            if sub == 0:
                if p2 * p4 * p6 != 0 or p4 * p6 * p8 != 0:
                    continue
            else:
                if p2 * p4 * p8 != 0 or p2 * p6 * p8 != 0:
                    continue
            out[i, j] = 0
            changed += 1
    return out, changed


def _thin_pass_numpy(img, sub):
    """Vectorized Zhang-Suen subiteration; same update as the kernel."""
    p2 = np.zeros_like(img); p2[1:, :] = img[:-1, :]
    p6 = np.zeros_like(img); p6[:-1, :] = img[1:, :]
    p4 = np.zeros_like(img); p4[:, :-1] = img[:, 1:]
    p8 = np.zeros_like(img); p8[:, 1:] = img[:, :-1]
    p3 = np.zeros_like(img); p3[1:, :-1] = img[:-1, 1:]
    p5 = np.zeros_like(img); p5[:-1, :-1] = img[1:, 1:]
    p7 = np.zeros_like(img); p7[:-1, 1:] = img[1:, :-1]
    p9 = np.zeros_like(img); p9[1:, 1:] = img[:-1, :-1]
    seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
    b = sum(seq[:8])
    a = sum(((seq[k] == 0) & (seq[k + 1] == 1)).astype(np.uint8) for k in range(8))
    cond = (img == 1) & (b >= 2) & (b <= 6) & (a == 1)
    if sub == 0:
        cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    else:
        cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    cond[0, :] = cond[-1, :] = False
    cond[:, 0] = cond[:, -1] = False
    out = img.copy()
    out[cond] = 0
    return out, int(cond.sum())


def _restore_vanished_squares(before: np.ndarray, after: np.ndarray) -> np.ndarray:
    """Keep one pixel of any 2x2 block a parallel subpass deleted whole.

    Plain Zhang-Suen removes an isolated 2x2 square entirely in one pass,
    which would drop the component; retaining the top-left pixel keeps the
    component count invariant without affecting larger structures.
    """
    solid = (before[:-1, :-1] & before[:-1, 1:] & before[1:, :-1] & before[1:, 1:]) == 1
    empty = (after[:-1, :-1] | after[:-1, 1:] | after[1:, :-1] | after[1:, 1:]) == 0
    ij = np.argwhere(solid & empty)
    if ij.size:
        after = after.copy()
        after[ij[:, 0], ij[:, 1]] = 1
    return after


def skeletonize(binary: np.ndarray) -> np.ndarray:
    """Zhang-Suen thinning of a boolean image to a 1-px wide skeleton.

    Connectivity of the solid phase is preserved; an empty image yields an
    empty skeleton.  The image border is treated as void (inputs here come
    from the width-projection pipeline, which never touches the border
    after padding).
    """
    img = np.pad(np.asarray(binary).astype(np.uint8), 1)
    step = _thin_pass if USE_NUMBA else _thin_pass_numpy
    while True:
        prev = img
        img, c0 = step(img, 0)
        img = _restore_vanished_squares(prev, img)
        prev = img
        img, c1 = step(img, 1)
        img = _restore_vanished_squares(prev, img)
        if np.array_equal(img, prev) and c0 == 0:
            break
    return img[1:-1, 1:-1].astype(bool)


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform (Felzenszwalb & Huttenlocher)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _edt_squared(seed):  # pragma: no cover - exercised through distance_transform
    """Squared EDT to the nearest seed pixel, exact, two 1D passes."""
    ny, nx = seed.shape
    big = 1.0e18
    f = np.empty((ny, nx), dtype=np.float64)
    # vertical pass: per column, distance to nearest seed in that column
    for j in range(nx):
        d = big
        for i in range(ny):
            d = 0.0 if seed[i, j] else min(d + 1.0, big)
            f[i, j] = d
        d = big
        for i in range(ny - 1, -1, -1):
            d = 0.0 if seed[i, j] else min(d + 1.0, big)
            if d < f[i, j]:
                f[i, j] = d
        for i in range(ny):
            v = f[i, j]
            f[i, j] = v * v if v < big else big
    # horizontal pass: 1D squared-distance lower envelope per row
    out = np.empty((ny, nx), dtype=np.float64)
    v = np.empty(nx, dtype=np.int64)
    z = np.empty(nx + 1, dtype=np.float64)
    for i in range(ny):
        k = 0
        v[0] = 0
        z[0] = -big
        z[1] = big
        for q in range(1, nx):
            s = ((f[i, q] + q * q) - (f[i, v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            while s <= z[k]:
                k -= 1
                s = ((f[i, q] + q * q) - (f[i, v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = big
        k = 0
        for q in range(nx):
            while z[k + 1] < q:
                k += 1
            out[i, q] = (q - v[k]) * (q - v[k]) + f[i, v[k]]
    return out


def distance_transform(seed: np.ndarray, squared: bool = False) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest True pixel."""
    seed = np.asarray(seed, dtype=bool)
    if not seed.any():
        raise ValueError("distance transform of an empty seed set is undefined")
    if USE_NUMBA:
        d2 = _edt_squared(seed)
    else:
        from scipy import ndimage

        d = ndimage.distance_transform_edt(~seed)
        d2 = np.round(d * d)
    return d2 if squared else np.sqrt(d2)


# ---------------------------------------------------------------------------
# Dilation and disk painting
# ---------------------------------------------------------------------------

def _disk_offsets(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dy * dy + dx * dx <= radius * radius
    return np.stack([dy[keep], dx[keep]], axis=1)


def dilate_disk(binary: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Dilate a boolean image with a Euclidean disk of the given radius."""
    binary = np.asarray(binary, dtype=bool)
    out = np.zeros_like(binary)
    ny, nx = binary.shape
    for dy, dx in _disk_offsets(radius):
        ys = slice(max(dy, 0), ny + min(dy, 0))
        yd = slice(max(-dy, 0), ny + min(-dy, 0))
        xs = slice(max(dx, 0), nx + min(dx, 0))
        xd = slice(max(-dx, 0), nx + min(-dx, 0))
        out[yd, xd] |= binary[ys, xs]
    return out


def paint_disks(shape: tuple[int, int], centers: np.ndarray, radius: float) -> np.ndarray:
    """Boolean mask with disks of the given radius painted at (row, col) centers."""
    mask = np.zeros(shape, dtype=bool)
    ny, nx = shape
    offsets = _disk_offsets(radius)
    for cy, cx in np.atleast_2d(centers):
        yy = cy + offsets[:, 0]
        xx = cx + offsets[:, 1]
        ok = (yy >= 0) & (yy < ny) & (xx >= 0) & (xx < nx)
        mask[yy[ok], xx[ok]] = True
    return mask
