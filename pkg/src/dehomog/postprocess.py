"""Width projection: intermediate density fields to a solid-void design.

Per lamination direction: bilinear upsample, normalize, solidify branching
regions, mean-threshold, skeletonize + dilate, exact distance transform with
outlier clipping, then adaptive thresholding with the lamination width. The
two directions are unioned and load regions solidified.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import torch

from . import losses, morphology
from .encoding import EncoderConfig, encode_field
from .fields import Grid2D, OrientationField, ScalarField, normalize_angle
from .network import Generator, generate_intermediate, UPSAMPLE_FACTOR
from .topopt import LaminationSolution


@dataclass(frozen=True)
class ProjectionConfig:
    """Settings of the width projection stage."""

    epsilon_i: float
    mu_min: float
    h_min: int = 3
    branch_maxima_threshold: float = 0.2
    dilation_radius: float = 1.0
    outlier_clip_quantile: float = 0.98
    m_up_override: int | None = None

    def __post_init__(self):
        if self.h_min < 2:
            raise ValueError("h_min must be at least 2 pixels")
        if self.epsilon_i * self.mu_min <= 0.0:
            raise ValueError("epsilon_i and mu_min must be positive")

    @property
    def branch_solidify_radius(self) -> float:
        """Branch disk radius in intermediate pixels."""
        return self.epsilon_i / 4.0

    @property
    def m_up(self) -> int:
        if self.m_up_override is not None:
            return max(1, int(self.m_up_override))
        return upsample_factor(self.h_min, self.epsilon_i, self.mu_min)

    @property
    def mu_lower_clip(self) -> float:
        """Width below which a member would span fewer than h_min fine pixels."""
        return self.h_min / (self.epsilon_i * self.m_up)


@dataclass
class DensityDesign:
    """Binary fine-grid design."""

    grid: Grid2D
    rho: np.ndarray  # exact {0.0, 1.0}
    volume_fraction: float

    @classmethod
    def from_binary(cls, grid: Grid2D, binary: np.ndarray) -> "DensityDesign":
        rho = np.where(np.asarray(binary, dtype=bool), 1.0, 0.0)
        return cls(grid=grid, rho=rho, volume_fraction=float(rho.mean()))


def upsample_factor(h_min: float, epsilon_i: float, mu_min: float) -> int:
    """Smallest integer factor that resolves the thinnest member by h_min pixels."""
    if h_min <= 0 or epsilon_i <= 0 or mu_min <= 0:
        raise ValueError("upsample_factor arguments must be positive")
    return max(1, math.ceil(h_min / (epsilon_i * mu_min)))


def bilinear_upsample(field: np.ndarray, factor: int) -> np.ndarray:
    """Cell-center aligned bilinear upsampling by an integer factor."""
    if factor == 1:
        return np.asarray(field, dtype=float).copy()
    f = np.asarray(field, dtype=float)
    ny, nx = f.shape
    def centers(n):
        return np.clip((np.arange(n * factor) + 0.5) / factor - 0.5, 0.0, n - 1.0)
    yc, xc = centers(ny), centers(nx)
    y0 = np.floor(yc).astype(int)
    x0 = np.floor(xc).astype(int)
    y1 = np.minimum(y0 + 1, ny - 1)
    x1 = np.minimum(x0 + 1, nx - 1)
    wy = (yc - y0)[:, None]
    wx = (xc - x0)[None, :]
    return (f[np.ix_(y0, x0)] * (1 - wy) * (1 - wx) + f[np.ix_(y0, x1)] * (1 - wy) * wx
            + f[np.ix_(y1, x0)] * wy * (1 - wx) + f[np.ix_(y1, x1)] * wy * wx)


def branch_maxima(indicator: np.ndarray, threshold: float) -> np.ndarray:
    """(row, col) local maxima of the normalized indicator above threshold."""
    ind = np.asarray(indicator, dtype=float)
    peak = ind.max()
    if peak <= 0.0:
        return np.zeros((0, 2), dtype=np.int64)
    ind = ind / peak
    p = np.pad(ind, 1, mode="constant", constant_values=-np.inf)
    is_max = np.ones_like(ind, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_max &= ind >= p[1 + dy:1 + dy + ind.shape[0], 1 + dx:1 + dx + ind.shape[1]]
    is_max &= ind > threshold
    return np.argwhere(is_max)


def prepare_binary(rho_up: np.ndarray, branch_centers: np.ndarray,
                   cfg: ProjectionConfig) -> np.ndarray:
    """Normalize the upsampled intermediate field, solidify branches, threshold.

    branch_centers are (row, col) coordinates on the upsampled grid.
    """
    lo, hi = float(rho_up.min()), float(rho_up.max())
    if hi - lo <= 0.0:
        raise ValueError("constant intermediate field: network output failed")
    norm = (rho_up - lo) / (hi - lo)
    if branch_centers.size:
        disks = morphology.paint_disks(norm.shape, branch_centers,
                                       cfg.branch_solidify_radius * cfg.m_up)
        norm = np.where(disks, 1.0, norm)
    return norm > norm.mean()


def skeleton_and_dilate(binary: np.ndarray, radius: float = 1.0) -> np.ndarray:
    skel = morphology.skeletonize(binary)
    if not skel.any():
        return skel
    return morphology.dilate_disk(skel, radius)


def distance_field(skeleton: np.ndarray, clip_quantile: float = 0.98) -> np.ndarray:
    """Exact EDT to the skeleton, clipped at the quantile of its local maxima
    and scaled to [0, 1]."""
    if not np.asarray(skeleton, dtype=bool).any():
        raise ValueError("empty skeleton")
    d = morphology.distance_transform(skeleton)
    p = np.pad(d, 1, mode="constant", constant_values=-np.inf)
    is_max = np.ones_like(d, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_max &= d >= p[1 + dy:1 + dy + d.shape[0], 1 + dx:1 + dx + d.shape[1]]
    ridge = d[is_max & (d > 0.0)]
    clip = float(np.quantile(ridge, clip_quantile)) if ridge.size else float(d.max())
    if clip <= 0.0:
        clip = float(d.max()) or 1.0
    return np.minimum(d, clip) / clip


def width_threshold(D1: np.ndarray, mu_up: np.ndarray, cfg: ProjectionConfig) -> np.ndarray:
    """Adaptive threshold: solid where the clipped width covers the distance."""
    mu = np.maximum(np.asarray(mu_up, dtype=float), cfg.mu_lower_clip)
    return mu >= D1


def union_and_solidify(rho1: np.ndarray, rho2: np.ndarray,
                       solid_mask: np.ndarray | None, grid: Grid2D) -> DensityDesign:
    """Clipped sum of the two direction designs plus forced-solid regions."""
    if rho1.shape != rho2.shape:
        raise ValueError("direction designs must share a shape")
    union = np.minimum(rho1.astype(float) + rho2.astype(float), 1.0)
    if solid_mask is not None:
        union = np.where(solid_mask, 1.0, union)
    return DensityDesign(grid=grid, rho=union, volume_fraction=float(union.mean()))


def solid_regions(lamination: LaminationSolution, fine_per_coarse: int,
                  load_elements: np.ndarray, load_radius_coarse: float = 2.0,
                  rho_solid: float = 0.99) -> np.ndarray:
    """Fine-grid mask of load-adjacent disks and near-solid coarse elements."""
    ny, nx = lamination.rho_phys.shape
    shape = (ny * fine_per_coarse, nx * fine_per_coarse)
    mask = np.kron(lamination.rho_phys > rho_solid,
                   np.ones((fine_per_coarse, fine_per_coarse), dtype=bool))
    if load_elements is not None and len(load_elements):
        centers = (np.asarray(load_elements, dtype=float) + 0.5) * fine_per_coarse
        mask |= morphology.paint_disks(shape, centers.astype(int),
                                       load_radius_coarse * fine_per_coarse)
    return mask


class StageError(RuntimeError):
    """An error in a named de-homogenization stage."""

    def __init__(self, stage: str, original: BaseException):
        super().__init__(f"{stage}: {original}")
        self.stage = stage
        self.original = original


def _project_direction(rho_i: np.ndarray, dot_surface: np.ndarray,
                       mu: np.ndarray, cfg: ProjectionConfig,
                       timings: dict) -> np.ndarray:
    m_up = cfg.m_up

    t0 = time.perf_counter()
    indicator = losses.branching_indicator(torch.from_numpy(dot_surface)).numpy()
    centers_i = branch_maxima(indicator, cfg.branch_maxima_threshold)
    timings["solidify branches"] = timings.get("solidify branches", 0.0) \
        + time.perf_counter() - t0

    t0 = time.perf_counter()
    rho_up = bilinear_upsample(rho_i, m_up)
    binary = prepare_binary(rho_up, centers_i * m_up, cfg)
    timings["binarize"] = timings.get("binarize", 0.0) + time.perf_counter() - t0

    t0 = time.perf_counter()
    skel = skeleton_and_dilate(binary, cfg.dilation_radius)
    timings["skeletonize"] = timings.get("skeletonize", 0.0) + time.perf_counter() - t0

    t0 = time.perf_counter()
    D = distance_field(skel, cfg.outlier_clip_quantile)
    timings["distance transform"] = timings.get("distance transform", 0.0) \
        + time.perf_counter() - t0

    t0 = time.perf_counter()
    mu_up = bilinear_upsample(mu, m_up * UPSAMPLE_FACTOR)
    rho_bin = width_threshold(D, mu_up, cfg)
    timings["width threshold"] = timings.get("width threshold", 0.0) \
        + time.perf_counter() - t0
    return rho_bin | skel


def dehomogenize(lamination: LaminationSolution, net: Generator,
                 cfg: ProjectionConfig, encoder: EncoderConfig | None = None,
                 load_elements: np.ndarray | None = None,
                 load_radius_coarse: float = 2.0):
    """Full projection of a lamination solution to a binary fine design.

    Returns (DensityDesign, timings dict with per-stage wall seconds).
    """
    encoder = encoder or EncoderConfig()
    fine_per_coarse = cfg.m_up * UPSAMPLE_FACTOR
    grid_f = Grid2D(nx=lamination.grid.nx * fine_per_coarse,
                    ny=lamination.grid.ny * fine_per_coarse,
                    h=lamination.grid.h / fine_per_coarse)
    timings: dict[str, float] = {}
    directions = []
    for d, (theta_d, mu_d) in enumerate(
            [(lamination.theta, lamination.mu1),
             (lamination.theta + math.pi / 2.0, lamination.mu2)], start=1):
        stage = f"direction {d}"
        try:
            t0 = time.perf_counter()
            orient = OrientationField(lamination.grid, normalize_angle(theta_d))
            encoded = encode_field(orient, encoder)
            timings["encode"] = timings.get("encode", 0.0) + time.perf_counter() - t0

            t0 = time.perf_counter()
            rho_i = generate_intermediate(net, encoded.values, encoder.pad_width)
            timings["forward pass"] = timings.get("forward pass", 0.0) \
                + time.perf_counter() - t0

            t0 = time.perf_counter()
            with torch.no_grad():
                rho_t = torch.from_numpy(rho_i)[None, None]
                ex, ey, _ = losses.image_gradient_orientations(rho_t)
                theta_t = losses.upsample_angles(
                    torch.from_numpy(orient.theta.astype(np.float32))[None, None],
                    UPSAMPLE_FACTOR)
                _, surface = losses.dot_loss(ex, ey, theta_t)
            dot_surface = surface[0, 0].numpy()
            timings["loss-surface evaluation"] = timings.get(
                "loss-surface evaluation", 0.0) + time.perf_counter() - t0

            directions.append(_project_direction(rho_i, dot_surface, mu_d, cfg,
                                                 timings))
        except StageError:
            raise
        except Exception as exc:  # noqa: BLE001 - stage name must be attached
            raise StageError(stage, exc) from exc

    t0 = time.perf_counter()
    mask = solid_regions(lamination, fine_per_coarse,
                         load_elements, load_radius_coarse)
    design = union_and_solidify(directions[0], directions[1], mask, grid_f)
    timings["union"] = time.perf_counter() - t0
    return design, timings
