"""Deterministic domain-gap pipeline for co-registered labeled clouds.

Stages, in order: cloud-to-cloud distance, class-wise cylinder-projection
(M3C2-style) medians, their weighted blend, voxel-occupancy mIoU, and the
final bounded gap score

    m = 1 - exp(alpha * (d + lambda3 / (mIoU + epsilon)))

with d = lambda1 * d_mm3c2 + lambda2 * d_c2c. Lower m means a better match;
m always lies strictly inside (0, 1) for alpha < 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    ClassWeights,
    LabeledPointCloud,
    SemanticClass,
    default_weights,
    partition_by_class,
)
from .errors import DegenerateDataError
from .spatial import NnIndex, _flatten_index_lists, estimate_normals, grid_origin, voxelize

C2C_MODES = ("directed-max", "directed-mean", "symmetric-max")
EQ3_WEIGHT_MODES = ("as-given", "renormalized")

_CANDIDATE_BUDGET = 2_000_000  # cylinder candidate rows per vectorized M3C2 pass


@dataclass(frozen=True)
class M3c2Params:
    """Cylinder search geometry: normal fit radius, projection radius, and
    half-depth of the search cylinder, all in meters."""

    normal_scale: float = 0.5
    projection_radius: float = 0.25
    max_depth: float = 1.0

    def __post_init__(self):
        for name in ("normal_scale", "projection_radius", "max_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"m3c2 {name} must be positive")


@dataclass(frozen=True)
class MetricParams:
    """Everything the gap pipeline needs, validated on construction.

    ``validation="strict"`` enforces the published weighting rule
    (lambda sum 1, strictly decreasing); ``"relaxed"`` only requires
    non-negative lambdas so alternative weightings can be explored.
    """

    lambda1: float = 0.6
    lambda2: float = 0.3
    lambda3: float = 0.1
    alpha: float = -0.2
    epsilon: float = 1e-6
    voxel_edge: float = 0.5
    weights: ClassWeights = field(default_factory=default_weights)
    m3c2: M3c2Params = field(default_factory=M3c2Params)
    c2c_mode: str = "directed-max"
    eq3_weight_mode: str = "as-given"
    validation: str = "strict"

    def __post_init__(self):
        if self.validation not in ("strict", "relaxed"):
            raise ValueError(f"validation must be strict or relaxed, got {self.validation!r}")
        lams = (self.lambda1, self.lambda2, self.lambda3)
        if min(lams) < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.validation == "strict":
            if abs(sum(lams) - 1.0) > 1e-9:
                raise ValueError(f"lambda weights must sum to 1, got {sum(lams)!r}")
            if not (self.lambda1 > self.lambda2 > self.lambda3):
                raise ValueError("lambda1 > lambda2 > lambda3 required")
        if self.alpha >= 0:
            raise ValueError("alpha must be negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.voxel_edge <= 0:
            raise ValueError("voxel edge must be positive")
        if self.c2c_mode not in C2C_MODES:
            raise ValueError(f"c2c_mode must be one of {C2C_MODES}")
        if self.eq3_weight_mode not in EQ3_WEIGHT_MODES:
            raise ValueError(f"eq3_weight_mode must be one of {EQ3_WEIGHT_MODES}")

    @classmethod
    def from_run_config(cls, cfg) -> "MetricParams":
        return cls(
            lambda1=cfg.lambda1,
            lambda2=cfg.lambda2,
            lambda3=cfg.lambda3,
            alpha=cfg.alpha,
            epsilon=cfg.epsilon,
            voxel_edge=cfg.voxel_size_m,
            weights=cfg.class_weights,
            m3c2=M3c2Params(
                cfg.m3c2_normal_scale_m,
                cfg.m3c2_projection_radius_m,
                cfg.m3c2_max_depth_m,
            ),
            c2c_mode=cfg.c2c_mode,
            eq3_weight_mode=cfg.eq3_weight_mode,
            validation=cfg.lambda_validation,
        )

    def to_json_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "lambda3": self.lambda3,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "voxel_size_m": self.voxel_edge,
            "class_weights": self.weights.to_json_dict(),
            "m3c2": {
                "normal_scale_m": self.m3c2.normal_scale,
                "projection_radius_m": self.m3c2.projection_radius,
                "max_depth_m": self.m3c2.max_depth,
            },
            "c2c_mode": self.c2c_mode,
            "eq3_weight_mode": self.eq3_weight_mode,
            "lambda_validation": self.validation,
        }


# ---------------------------------------------------------------------------
# cloud-to-cloud distance
# ---------------------------------------------------------------------------


def c2c_distance(real: LabeledPointCloud, synth: LabeledPointCloud, mode: str = "directed-max") -> float:
    """Nearest-neighbor cloud distance in meters; labels are ignored.

    ``directed-max`` is the max over real points of the distance to the
    closest synthetic point (directed Hausdorff); ``directed-mean`` averages
    those per-point minima; ``symmetric-max`` takes the worse direction.
    """
    if mode not in C2C_MODES:
        raise ValueError(f"c2c mode must be one of {C2C_MODES}")
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("c2c distance requires two non-empty clouds")
    d_rs = NnIndex(synth.xyz).nearest_distances(real.xyz)
    if mode == "directed-mean":
        return float(d_rs.mean())
    if mode == "directed-max":
        return float(d_rs.max())
    d_sr = NnIndex(real.xyz).nearest_distances(synth.xyz)
    return float(max(d_rs.max(), d_sr.max()))


# ---------------------------------------------------------------------------
# class-wise M3C2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class M3c2ClassResult:
    """Signed median of inlier distances; None when no core point matched."""

    median: float | None
    inliers: int
    outliers: int


def _cylinder_means(
    index: NnIndex,
    cores: np.ndarray,
    normals: np.ndarray,
    radius: float,
    half_depth: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean position of indexed points inside each core's search cylinder."""
    n = cores.shape[0]
    means = np.zeros((n, 3))
    counts = np.zeros(n, dtype=np.int64)
    reach = float(np.hypot(radius, half_depth)) * (1.0 + 1e-12)
    lists = index.within_radius_many(cores, reach)
    cand_counts = np.array([len(l) for l in lists], dtype=np.int64)
    nz = np.flatnonzero(cand_counts > 0)
    if nz.size == 0:
        return means, counts
    flat = _flatten_index_lists(lists, nz, int(cand_counts[nz].sum()))
    seg_counts = cand_counts[nz]
    starts = np.concatenate(([0], np.cumsum(seg_counts)[:-1]))
    seg_ids = np.repeat(np.arange(nz.size), seg_counts)

    pts = index.points[flat]
    rel = pts - cores[nz][seg_ids]
    axial = np.einsum("ij,ij->i", rel, normals[nz][seg_ids])
    radial2 = np.maximum(np.einsum("ij,ij->i", rel, rel) - axial**2, 0.0)
    keep = (np.abs(axial) <= half_depth) & (radial2 <= radius * radius)

    w = keep.astype(np.float64)
    sums = np.add.reduceat(pts * w[:, None], starts, axis=0)
    hits = np.add.reduceat(w, starts).astype(np.int64)
    with np.errstate(invalid="ignore"):
        seg_means = sums / np.maximum(hits, 1)[:, None]
    means[nz] = seg_means
    counts[nz] = hits
    return means, counts


def m3c2_class_distance(
    real_cls: LabeledPointCloud,
    synth_cls: LabeledPointCloud,
    params: M3c2Params = M3c2Params(),
) -> M3c2ClassResult:
    """Normal-direction distance between two same-class sub-clouds.

    Every real point is a core point. At each core the surface normal is
    fitted from the real neighborhood, a cylinder is projected both ways
    along it, and the signed distance is the normal-axis separation of the
    real and synthetic mean positions inside that cylinder. Cores with a
    degenerate normal or an empty cylinder on either side are outliers and
    are ignored; the result is the median over inlier signed distances.
    """
    n_cores = len(real_cls)
    if n_cores == 0:
        return M3c2ClassResult(None, 0, 0)
    if len(synth_cls) == 0:
        return M3c2ClassResult(None, 0, n_cores)

    index_r = NnIndex(real_cls.xyz)
    index_s = NnIndex(synth_cls.xyz)
    signed = np.zeros(n_cores)
    inlier = np.zeros(n_cores, dtype=bool)

    # chunk on candidate counts, not core counts, so dense clouds stay in memory
    reach = float(np.hypot(params.projection_radius, params.max_depth)) * (1.0 + 1e-12)
    load = (
        index_r.count_within_radius_many(real_cls.xyz, reach)
        + index_s.count_within_radius_many(real_cls.xyz, reach)
        + index_r.count_within_radius_many(real_cls.xyz, params.normal_scale)
        + 1
    )
    groups = np.cumsum(load) // _CANDIDATE_BUDGET
    boundaries = np.flatnonzero(np.diff(groups)) + 1
    edges = np.concatenate(([0], boundaries, [n_cores]))

    for start, stop in zip(edges[:-1], edges[1:]):
        if start == stop:
            continue
        cores = real_cls.xyz[start:stop]
        normals, valid = estimate_normals(index_r, cores, params.normal_scale)
        mean_r, count_r = _cylinder_means(
            index_r, cores, normals, params.projection_radius, params.max_depth
        )
        mean_s, count_s = _cylinder_means(
            index_s, cores, normals, params.projection_radius, params.max_depth
        )
        ok = valid & (count_r > 0) & (count_s > 0)
        sep = np.einsum("ij,ij->i", mean_s - mean_r, normals)
        signed[start:stop] = np.where(ok, sep, 0.0)
        inlier[start:stop] = ok

    n_in = int(inlier.sum())
    if n_in == 0:
        return M3c2ClassResult(None, 0, n_cores)
    return M3c2ClassResult(float(np.median(signed[inlier])), n_in, n_cores - n_in)


def aggregate_mm3c2(
    per_class: Mapping[SemanticClass, M3c2ClassResult], weights: ClassWeights
) -> float:
    """Weighted mean of absolute class medians, renormalized over the classes
    that produced a median. Raises when no weighted class is comparable."""
    defined = [c for c, r in per_class.items() if r.median is not None and weights.get(c) > 0]
    renorm = weights.restricted_to(defined)
    if not renorm:
        raise DegenerateDataError("no comparable semantic content for weighted M3C2")
    return float(sum(w * abs(per_class[c].median) for c, w in renorm.items()))


def mm3c2_distance(
    real: LabeledPointCloud,
    synth: LabeledPointCloud,
    weights: ClassWeights | None = None,
    params: M3c2Params = M3c2Params(),
) -> float:
    weights = weights or default_weights()
    per_class = compute_m3c2_per_class(real, synth, weights, params)
    return aggregate_mm3c2(per_class, weights)


def compute_m3c2_per_class(
    real: LabeledPointCloud,
    synth: LabeledPointCloud,
    weights: ClassWeights,
    params: M3c2Params,
) -> dict[SemanticClass, M3c2ClassResult]:
    """Class-wise results for every positively weighted class."""
    parts_r = partition_by_class(real)
    parts_s = partition_by_class(synth)
    out: dict[SemanticClass, M3c2ClassResult] = {}
    for cls in SemanticClass:
        if weights.get(cls) > 0:
            out[cls] = m3c2_class_distance(parts_r[cls], parts_s[cls], params)
        else:
            out[cls] = M3c2ClassResult(None, 0, 0)
    return out


# ---------------------------------------------------------------------------
# voxel occupancy IoU
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VoxelIouResult:
    per_class: Mapping[SemanticClass, float | None]  # None = class in neither cloud
    miou: float
    grid_origin: tuple[float, float, float]


def voxel_miou(
    real: LabeledPointCloud,
    synth: LabeledPointCloud,
    edge: float,
    weights: ClassWeights | None = None,
) -> VoxelIouResult:
    """Per-class voxel-occupancy IoU on a shared grid anchored to the real cloud.

    A voxel counts as occupied by a class when at least one point of that
    class falls in it. The weighted mean renormalizes over classes whose
    occupancy union is non-empty, so a class absent from both clouds never
    penalizes the score.
    """
    weights = weights or default_weights()
    origin = grid_origin(real.xyz, edge)
    grid_r = voxelize(real, edge, origin)
    grid_s = voxelize(synth, edge, origin)

    per_class: dict[SemanticClass, float | None] = {}
    for cls in SemanticClass:
        vr = grid_r.class_voxels(cls.value)
        vs = grid_s.class_voxels(cls.value)
        union = vr | vs
        per_class[cls] = len(vr & vs) / len(union) if union else None

    present = [c for c in SemanticClass if per_class[c] is not None]
    renorm = weights.restricted_to(present)
    if not renorm:
        raise DegenerateDataError("no comparable semantic content for voxel IoU")
    miou = float(sum(w * per_class[c] for c, w in renorm.items()))
    return VoxelIouResult(per_class, miou, tuple(float(v) for v in origin))


# ---------------------------------------------------------------------------
# score composition and the full pipeline
# ---------------------------------------------------------------------------


def blend_distance(d_mm3c2: float, d_c2c: float, params: MetricParams) -> float:
    """Weighted blend of the class-wise and global distances (meters)."""
    l1, l2 = params.lambda1, params.lambda2
    if params.eq3_weight_mode == "renormalized":
        total = l1 + l2
        if total <= 0:
            raise ValueError("lambda1 + lambda2 must be positive to renormalize")
        l1, l2 = l1 / total, l2 / total
    return l1 * abs(d_mm3c2) + l2 * abs(d_c2c)


def compose_score(d_mm3c2: float, d_c2c: float, miou: float, params: MetricParams) -> tuple[float, float, float]:
    """Return (d, f_miou, m) from already computed components.

    m lies strictly in (0, 1); it saturates to exactly 1.0 only when the
    exponent underflows (mIoU within epsilon of zero at default alpha).
    """
    d = blend_distance(d_mm3c2, d_c2c, params)
    f_miou = 1.0 / (miou + params.epsilon)
    m = 1.0 - math.exp(params.alpha * (d + params.lambda3 * f_miou))
    return d, f_miou, m


@dataclass(frozen=True)
class ClassGapStats:
    m3c2_median: float | None
    inlier_count: int
    outlier_count: int
    iou: float | None


@dataclass(frozen=True)
class GapReport:
    """Every intermediate quantity of one comparison, plus the parameters used."""

    params: MetricParams
    d_c2c: float
    per_class: Mapping[SemanticClass, ClassGapStats]
    d_mm3c2: float
    miou: float
    f_miou: float
    d: float
    m_dogss_pcl: float
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def to_json_dict(self) -> dict:
        return {
            "report_type": "gap",
            "params": self.params.to_json_dict(),
            "offset": list(self.offset),
            "d_c2c": self.d_c2c,
            "per_class": {
                cls.canonical_name: {
                    "m3c2_median": stats.m3c2_median,
                    "inlier_count": stats.inlier_count,
                    "outlier_count": stats.outlier_count,
                    "iou": stats.iou,
                }
                for cls, stats in self.per_class.items()
            },
            "d_mm3c2": self.d_mm3c2,
            "miou": self.miou,
            "f_miou": self.f_miou,
            "d": self.d,
            "m_dogss_pcl": self.m_dogss_pcl,
        }


def dogss_pcl(
    real: LabeledPointCloud,
    synth: LabeledPointCloud,
    params: MetricParams | None = None,
) -> GapReport:
    """Full deterministic comparison of a synthetic cloud against its real twin."""
    params = params or MetricParams()
    if len(real) == 0 or len(synth) == 0:
        raise ValueError("gap comparison requires two non-empty clouds")

    d_c2c = c2c_distance(real, synth, params.c2c_mode)
    m3c2_results = compute_m3c2_per_class(real, synth, params.weights, params.m3c2)
    d_mm3c2 = aggregate_mm3c2(m3c2_results, params.weights)
    iou = voxel_miou(real, synth, params.voxel_edge, params.weights)
    d, f_miou, m = compose_score(d_mm3c2, d_c2c, iou.miou, params)

    per_class = {
        cls: ClassGapStats(
            m3c2_results[cls].median,
            m3c2_results[cls].inliers,
            m3c2_results[cls].outliers,
            iou.per_class[cls],
        )
        for cls in SemanticClass
    }
    return GapReport(
        params=params,
        d_c2c=d_c2c,
        per_class=per_class,
        d_mm3c2=d_mm3c2,
        miou=iou.miou,
        f_miou=f_miou,
        d=d,
        m_dogss_pcl=m,
    )


def offset_sensitivity(
    real: LabeledPointCloud,
    synth: LabeledPointCloud,
    offsets: Sequence,
    params: MetricParams | None = None,
) -> list[GapReport]:
    """Apply each rigid translation to the synthetic cloud and re-run the
    comparison; the applied offset is recorded in each report."""
    params = params or MetricParams()
    reports = []
    for vec in offsets:
        v = np.asarray(vec, dtype=np.float64).reshape(3)
        report = dogss_pcl(real, synth.translate(v), params)
        reports.append(replace(report, offset=tuple(float(x) for x in v)))
    return reports


#: Unit direction used when a scalar offset magnitude is given: the diagonal
#: perturbs all three axes at once, so no axis-aligned structure stays aligned.
DIAGONAL_DIRECTION = (1.0 / math.sqrt(3.0),) * 3


def scalar_offsets_to_vectors(magnitudes: Sequence[float]) -> list[tuple[float, float, float]]:
    return [tuple(m * c for c in DIAGONAL_DIRECTION) for m in magnitudes]
