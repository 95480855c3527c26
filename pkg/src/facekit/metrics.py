"""Face geometry metrics: line ratios (ARE), landmark NME, and point-to-plane RMSE.

Face width and length are the bounding-box extents of the reference mesh
along x (ear to ear) and y (forehead to chin) in the model frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .fitting import REGION_NAMES, LandmarkSpec
from .model import FaceMesh, vertex_normals
from .registration import IcpConfig, icp, icp_points

LINES = {"ER": ("A", "B"), "FR": ("C", "D"), "MR": ("G", "H"), "CR": ("I", "J")}
OICD = ("E", "F")
MIN_REGION_VERTICES = 6


@dataclass(frozen=True, eq=False)
class MetricsReport:
    are: dict
    nme: float
    holistic_rmse: float
    part_rmse: dict
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        keys = set(LINES) | {"mean"}
        if set(self.are) != keys:
            raise ValidationError(f"are block needs exactly the keys {sorted(keys)}")
        if set(self.part_rmse) != set(REGION_NAMES):
            raise ValidationError(f"part_rmse needs exactly the keys {list(REGION_NAMES)}")
        values = [*self.are.values(), self.nme, self.holistic_rmse, *self.part_rmse.values()]
        if not all(np.isfinite(v) and v >= 0 for v in values):
            raise ValidationError("metric values must be finite and non-negative")
        expected = sum(self.are[k] for k in LINES) / len(LINES)
        if abs(self.are["mean"] - expected) > 1e-12:
            raise ValidationError(f"are.mean {self.are['mean']!r} is not the mean of its components {expected!r}")


def _check_pair(pred: FaceMesh, ref: FaceMesh) -> None:
    if pred.n_vertices != ref.n_vertices:
        raise DimensionError(f"meshes differ in vertex count: {pred.n_vertices} vs {ref.n_vertices}")


def distance_ratio(mesh: FaceMesh, spec: LandmarkSpec, line: str) -> float:
    """Length of a named facial line divided by the outer-interocular distance."""
    if line not in LINES:
        raise ValidationError(f"unknown line {line!r}; expected one of {list(LINES)}")
    spec.check_model(mesh.n_vertices)
    v = mesh.vertices
    e, f = (v[spec.anchors[k]] for k in OICD)
    oicd = np.linalg.norm(e - f)
    if oicd == 0:
        raise ValidationError("outer eye corners E and F coincide")
    a, b = (v[spec.anchors[k]] for k in LINES[line])
    return float(np.linalg.norm(a - b) / oicd)


def are(pred: FaceMesh, ref: FaceMesh, spec: LandmarkSpec) -> dict:
    out = {line: abs(distance_ratio(pred, spec, line) - distance_ratio(ref, spec, line)) for line in LINES}
    out["mean"] = sum(out[k] for k in LINES) / len(LINES)
    return out


def face_size(mesh: FaceMesh) -> float:
    extent = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    width, length = extent[0], extent[1]
    if width <= 0 or length <= 0:
        raise ValidationError("reference face has zero width or length")
    return float(np.sqrt(width * length))


def nme(pred: FaceMesh, ref: FaceMesh, spec: LandmarkSpec) -> float:
    _check_pair(pred, ref)
    spec.check_model(ref.n_vertices)
    idx = spec.landmarks68
    err = np.linalg.norm(pred.vertices[idx] - ref.vertices[idx], axis=1)
    return float(err.mean() / face_size(ref))


def holistic_rmse(pred: FaceMesh, ref: FaceMesh, cfg: IcpConfig | None = None) -> float:
    return icp(pred, ref, cfg).rmse


def part_rmse(pred: FaceMesh, ref: FaceMesh, spec: LandmarkSpec, cfg: IcpConfig | None = None) -> dict:
    """Per-region ICP + point-to-plane RMSE.

    Target normals for a region are the reference mesh normals of its vertices,
    i.e. built from every triangle incident to the region.
    """
    _check_pair(pred, ref)
    spec.check_model(ref.n_vertices)
    normals = vertex_normals(ref)
    out = {}
    for name in REGION_NAMES:
        ids = spec.regions[name]
        if ids.size < MIN_REGION_VERTICES:
            raise ValidationError(f"region {name} has {ids.size} vertices; need {MIN_REGION_VERTICES}")
        out[name] = icp_points(pred.vertices[ids], ref.vertices[ids], normals[ids], cfg).rmse
    return out


def evaluate(pred: FaceMesh, ref: FaceMesh, spec: LandmarkSpec, cfg: IcpConfig | None = None,
             provenance: dict | None = None) -> MetricsReport:
    """Full report; holistic ICP runs before the per-part ICP."""
    are_block = are(pred, ref, spec)
    n = nme(pred, ref, spec)
    holistic = holistic_rmse(pred, ref, cfg)
    parts = part_rmse(pred, ref, spec, cfg)
    return MetricsReport(are_block, n, holistic, parts, dict(provenance or {}))
