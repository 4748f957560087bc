"""End-to-end construction of a size field from a surface mesh."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .curvature import CurvatureField, compute_curvature
from .delaunay import tetrahedralize
from .field import SizeField
from .limiter import compute_gradients, limit_sizes
from .medial import FeatureField, compute_feature_field
from .mesh_io import SurfaceMesh, bounding_box
from .octree import Octree, SizeFieldParams, balance_octree, init_octree, refine_octree
from .rtree import build_rtree, triangle_boxes

logger = logging.getLogger(__name__)

__all__ = ["BuildReport", "StageError", "build_size_field", "vertex_targets"]

STAGES = ("curvature", "medial axis", "octree init", "refine + balance", "gradient limiting")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class BuildReport:
    timings: dict = field(default_factory=dict)
    curvature: CurvatureField | None = None
    features: FeatureField | None = None
    h_c: np.ndarray | None = None
    h_f: np.ndarray | None = None
    tree: Octree | None = None
    limiter_passes: int = 0

    def timing_table(self) -> str:
        total = sum(self.timings.values()) or 1.0
        rows = [f"{'stage':<20}{'seconds':>10}{'share':>8}"]
        for name, t in self.timings.items():
            rows.append(f"{name:<20}{t:>10.3f}{100 * t / total:>7.1f}%")
        rows.append(f"{'total':<20}{sum(self.timings.values()):>10.3f}")
        return "\n".join(rows)


@contextmanager
def _stage(report: BuildReport, name: str):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrapped with the stage name
        raise StageError(name, exc) from exc
    finally:
        report.timings[name] = time.perf_counter() - t0


def vertex_targets(h_c: np.ndarray, h_f: np.ndarray | None) -> np.ndarray:
    """Per-vertex min(h_c, h_f); inf where neither constrains."""
    return h_c if h_f is None else np.minimum(h_c, h_f)


def build_size_field(mesh: SurfaceMesh, params: SizeFieldParams | None = None,
                     features: bool = True) -> tuple[SizeField, BuildReport]:
    """Curvature, medial axis, octree init, refinement and balance, limiting.

    Parameters
    ----------
    mesh : SurfaceMesh
    params : SizeFieldParams, optional
        Defaults derived from the bounding box when omitted.
    features : bool
        Compute feature (gap) sizes from the medial axis.
    """
    bbox = bounding_box(mesh)
    if params is None:
        params = SizeFieldParams.defaults(bbox.L)
    report = BuildReport()

    with _stage(report, "curvature"):
        report.curvature = compute_curvature(mesh)
        report.h_c = report.curvature.meshsize(params.n_d)

    with _stage(report, "medial axis"):
        if features:
            dc = tetrahedralize(mesh.vertices)
            ff = compute_feature_field(dc, report.curvature.normals[_inverse(dc.index_map, len(dc.points))],
                                       params.n_g, surface_edges=_remap_edges(mesh.edges, dc.index_map))
            report.features = ff
            report.h_f = ff.h_f[dc.index_map]

    with _stage(report, "octree init"):
        tree = init_octree(bbox, params)

    with _stage(report, "refine + balance"):
        target = vertex_targets(report.h_c, report.h_f)
        tri_target = target[mesh.triangles].min(axis=1)
        rtree = build_rtree(*triangle_boxes(mesh.vertices, mesh.triangles))
        refine_octree(tree, rtree, tri_target, params)
        balance_octree(tree, rtree, tri_target, params)
        report.tree = tree

    with _stage(report, "gradient limiting"):
        leaves = tree.leaves()
        h = np.ascontiguousarray(tree.h[leaves], dtype=np.float64)
        probe = SizeField(params, tree, h, np.zeros((len(h), 3)))
        pairs = probe.face_pairs()
        report.limiter_passes = limit_sizes(h, pairs, params.alpha)
        grad = compute_gradients(tree.level[leaves], h, pairs)
        result = SizeField(params, tree, h, grad, user_size=params.h_u is not None)

    logger.info("size field: %d leaves", result.n_leaves)
    return result, report


def _inverse(index_map: np.ndarray, n: int) -> np.ndarray:
    """First input index for every deduplicated point."""
    inv = np.full(n, -1, dtype=np.int64)
    inv[index_map[::-1]] = np.arange(len(index_map))[::-1]
    return inv


def _remap_edges(edges: np.ndarray, index_map: np.ndarray) -> np.ndarray:
    e = index_map[edges]
    return e[e[:, 0] != e[:, 1]]
