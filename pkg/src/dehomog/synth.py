"""Synthetic orientation-field dataset from sums of low-frequency sines.

A global scalar field F(x, y) = sum_nm c_nm sin(n pi x) sin(m pi y) is
rasterized, its gradient orientations are extracted, and patches with a
bounded neighbor-to-neighbor angular change are rejection-sampled from it.
Patches are 2x2 block averaged (as doubled-angle vectors), perturbed with
weak angular noise and written out with a line-oriented manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import Grid2D, OrientationField, ScalarField, normalize_angle, write_field

SINGULAR_EPS = 1e-12
MAX_REJECTS = 10_000


@dataclass(frozen=True)
class DatasetConfig:
    global_size: tuple[int, int] = (800, 800)           # (H, W)
    patch_sizes: tuple[tuple[int, int], ...] = ((80, 80), (60, 120), (40, 160))
    sine_orders: tuple[int, ...] = (6, 8, 10)
    theta_max_deg: float = 25.0
    resample_every: int = 100
    num_patches: int = 2000
    noise_sigma: float = 0.02
    rng_seed: int = 0

    def __post_init__(self):
        H, W = self.global_size
        for h, w in self.patch_sizes:
            if h > H or w > W:
                raise ValueError(f"patch {h}x{w} does not fit inside {H}x{W} global field")
            if h % 2 or w % 2:
                raise ValueError("patch sizes must be even for 2x2 subsampling")
        if self.theta_max_deg <= 0:
            raise ValueError("theta_max must be positive")
        if self.resample_every < 1:
            raise ValueError("resample_every must be >= 1")


def make_global_field(n: int, m: int, coeffs: np.ndarray, resolution: tuple[int, int],
                      x_len: float = 1.0, y_len: float = 1.0) -> ScalarField:
    """Rasterize F(x,y) = sum_nm c_nm sin(n pi x / xL) sin(m pi y / yL).

    coeffs has shape (n, m); the field vanishes on the domain boundary.
    """
    if n < 1 or m < 1:
        raise ValueError("sine orders must be >= 1")
    H, W = resolution
    if H < 1 or W < 1:
        raise ValueError("resolution must be positive")
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (n, m):
        raise ValueError(f"coeffs shape {coeffs.shape} != ({n}, {m})")
    x = (np.arange(W) + 0.5) / W * x_len
    y = (np.arange(H) + 0.5) / H * y_len
    sx = np.sin(np.outer(np.arange(1, n + 1) * np.pi / x_len, x))   # (n, W)
    sy = np.sin(np.outer(np.arange(1, m + 1) * np.pi / y_len, y))   # (m, H)
    F = sy.T @ coeffs.T @ sx                                        # (H, W)
    return ScalarField(Grid2D(W, H, x_len / W), F)


def field_gradient_orientations(F: ScalarField) -> tuple[OrientationField, np.ndarray]:
    """Central-difference gradient orientations of F and a singular-cell mask."""
    vals = F.values
    if vals.shape[0] < 3 or vals.shape[1] < 3:
        raise ValueError("field must be at least 3x3 for central differences")
    h = F.grid.h
    vy, vx = np.gradient(vals, h)
    mag = np.hypot(vx, vy)
    singular = mag < SINGULAR_EPS
    theta = normalize_angle(np.arctan2(vy, np.where(singular, 1.0, vx)))
    theta[singular] = 0.0
    return OrientationField(F.grid, theta), singular


def angular_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Smallest difference between 2-directional angles (modulo pi)."""
    d = np.abs(np.mod(a - b, np.pi))
    return np.minimum(d, np.pi - d)


def _max_neighbor_change(theta: np.ndarray) -> float:
    dh = angular_difference(theta[:, 1:], theta[:, :-1])
    dv = angular_difference(theta[1:, :], theta[:-1, :])
    return max(dh.max(initial=0.0), dv.max(initial=0.0))


def sample_patch(orient: OrientationField, singular: np.ndarray, cfg: DatasetConfig,
                 rng: np.random.Generator) -> OrientationField:
    """Rejection-sample a patch obeying the theta_max neighbor constraint."""
    theta_max = np.deg2rad(cfg.theta_max_deg)
    H, W = orient.grid.shape
    for _ in range(MAX_REJECTS):
        ph, pw = cfg.patch_sizes[rng.integers(len(cfg.patch_sizes))]
        i0 = rng.integers(H - ph + 1)
        j0 = rng.integers(W - pw + 1)
        if singular[i0:i0 + ph, j0:j0 + pw].any():
            continue
        patch = orient.theta[i0:i0 + ph, j0:j0 + pw]
        if _max_neighbor_change(patch) > theta_max:
            continue
        return OrientationField(Grid2D(pw, ph, orient.grid.h), patch.copy())
    raise RuntimeError(
        f"no admissible patch after {MAX_REJECTS} draws; the global field is degenerate"
    )


def subsample_2x2(patch: OrientationField) -> OrientationField:
    """Halve resolution by 2x2 block averaging of doubled-angle unit vectors.

    Averaging (cos 2t, sin 2t) respects the mod-pi equivalence; naive
    direction-vector averaging would cancel antipodal but equivalent
    orientations.
    """
    t = patch.theta
    ny, nx = t.shape
    if ny % 2 or nx % 2:
        raise ValueError("subsample_2x2 requires even dimensions")
    c = np.cos(2 * t).reshape(ny // 2, 2, nx // 2, 2).mean(axis=(1, 3))
    s = np.sin(2 * t).reshape(ny // 2, 2, nx // 2, 2).mean(axis=(1, 3))
    theta = normalize_angle(0.5 * np.arctan2(s, c))
    return OrientationField(Grid2D(nx // 2, ny // 2, patch.grid.h * 2), theta)


def generate_dataset(cfg: DatasetConfig, out_dir) -> Path:
    """Write cfg.num_patches orientation patches plus a manifest; deterministic.

    The global field is resampled every cfg.resample_every patches with the
    order drawn from cfg.sine_orders, and weak Gaussian angular noise is
    added before storage.  Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    master = np.random.SeedSequence(cfg.rng_seed)
    n_fields = -(-cfg.num_patches // cfg.resample_every) if cfg.num_patches else 0
    field_seeds = master.spawn(n_fields)
    patch_seeds = master.spawn(cfg.num_patches)

    lines = []
    orient = singular = None
    for k in range(cfg.num_patches):
        if k % cfg.resample_every == 0:
            frng = np.random.default_rng(field_seeds[k // cfg.resample_every])
            order = cfg.sine_orders[frng.integers(len(cfg.sine_orders))]
            coeffs = frng.uniform(-1.0, 1.0, size=(order, order))
            F = make_global_field(order, order, coeffs, cfg.global_size)
            orient, singular = field_gradient_orientations(F)
        rng = np.random.default_rng(patch_seeds[k])
        patch = sample_patch(orient, singular, cfg, rng)
        patch = subsample_2x2(patch)
        noisy = normalize_angle(patch.theta + rng.normal(0.0, cfg.noise_sigma, patch.theta.shape))
        patch = OrientationField(patch.grid, noisy.astype(np.float32))
        name = f"patch_{k:06d}.field"
        try:
            write_field(patch, out_dir / name)
        except OSError as exc:
            raise OSError(f"failed writing {out_dir / name}: {exc}") from exc
        ny, nx = patch.grid.shape
        seed_id = int(patch_seeds[k].generate_state(1)[0])
        lines.append(f"{name} {seed_id} {ny} {nx}")

    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + ("\n" if lines else ""))
    return manifest


def read_manifest(manifest_path) -> list[dict]:
    """Parse a manifest into dicts with path/seed/height/width keys."""
    manifest_path = Path(manifest_path)
    entries = []
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        name, seed, ny, nx = line.split()
        entries.append({
            "path": manifest_path.parent / name,
            "seed": int(seed),
            "height": int(ny),
            "width": int(nx),
        })
    return entries
