"""Linear morphable face model: data types, synthesis, pose and normals.

A face is ``mean_face + shape_basis @ alpha_s + expr_basis @ alpha_e``, a flat
vector of ``3N`` reals laid out vertex-major (x0, y0, z0, x1, ...). Reshaping
it to ``(N, 3)`` gives the vertex matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NormalizationStateError, ValidationError

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class ParamStats:
    """Per-coefficient mean/std over the stacked (shape, expr) vector."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        std = np.asarray(self.std, dtype=np.float64).ravel()
        if mean.shape != std.shape:
            raise DimensionError(f"stats mean {mean.shape} vs std {std.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(std))):
            raise ValidationError("param stats must be finite")
        if np.any(std <= 0):
            raise ValidationError("param stats std must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True, eq=False)
class MorphableModel:
    mean_face: np.ndarray
    shape_basis: np.ndarray
    expr_basis: np.ndarray
    triangles: np.ndarray
    param_stats: ParamStats | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean_face, dtype=np.float64).ravel()
        vs = np.asarray(self.shape_basis, dtype=np.float64)
        ve = np.asarray(self.expr_basis, dtype=np.float64)
        tri = np.asarray(self.triangles, dtype=np.int64)
        if mean.size == 0 or mean.size % 3:
            raise DimensionError(f"mean_face length {mean.size} is not a positive multiple of 3")
        n3 = mean.size
        if vs.ndim != 2 or vs.shape[0] != n3 or vs.shape[1] < 1:
            raise DimensionError(f"shape_basis must be ({n3}, P_s), got {vs.shape}")
        if ve.ndim != 2 or ve.shape[0] != n3 or ve.shape[1] < 1:
            raise DimensionError(f"expr_basis must be ({n3}, P_e), got {ve.shape}")
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise DimensionError(f"triangles must be (T, 3), got {tri.shape}")
        if tri.size and (tri.min() < 0 or tri.max() >= n3 // 3):
            raise ValidationError("triangle index out of range")
        for name, arr in (("mean_face", mean), ("shape_basis", vs), ("expr_basis", ve)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
        if self.param_stats is not None and self.param_stats.mean.size != vs.shape[1] + ve.shape[1]:
            raise DimensionError("param_stats length must equal P_s + P_e")
        object.__setattr__(self, "mean_face", mean)
        object.__setattr__(self, "shape_basis", vs)
        object.__setattr__(self, "expr_basis", ve)
        object.__setattr__(self, "triangles", tri)

    @property
    def n_vertices(self) -> int:
        return self.mean_face.size // 3

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[1]

    @property
    def n_expr(self) -> int:
        return self.expr_basis.shape[1]

    def zero_params(self) -> ParamVector:
        return ParamVector(np.zeros(self.n_shape), np.zeros(self.n_expr))

    def mean_mesh(self) -> FaceMesh:
        return FaceMesh(self.mean_face.reshape(-1, 3).copy(), self.triangles)


@dataclass(frozen=True, eq=False)
class FaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        tri = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
            raise DimensionError(f"vertices must be (N, 3) with N >= 1, got {v.shape}")
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise DimensionError(f"triangles must be (T, 3), got {tri.shape}")
        if tri.size and (tri.min() < 0 or tri.max() >= v.shape[0]):
            raise ValidationError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise ValidationError("mesh vertices must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", tri)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def diagonal(self) -> float:
        """Length of the axis-aligned bounding-box diagonal."""
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


@dataclass(frozen=True, eq=False)
class ParamVector:
    shape: np.ndarray
    expr: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        s = np.asarray(self.shape, dtype=np.float64).ravel()
        e = np.asarray(self.expr, dtype=np.float64).ravel()
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(e))):
            raise ValidationError("parameters must be finite")
        object.__setattr__(self, "shape", s)
        object.__setattr__(self, "expr", e)
        object.__setattr__(self, "normalized", bool(self.normalized))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.shape, self.expr])

    @classmethod
    def from_stacked(cls, values, n_shape: int, normalized: bool = False) -> ParamVector:
        values = np.asarray(values, dtype=np.float64).ravel()
        if not 0 <= n_shape <= values.size:
            raise DimensionError(f"cannot split {values.size} values at {n_shape}")
        return cls(values[:n_shape], values[n_shape:], normalized)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).ravel()
        if r.shape != (3, 3) or t.shape != (3,):
            raise DimensionError("rotation must be 3x3 and translation length 3")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValidationError("transform must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValidationError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        k = skew(axis)
        r = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
        return cls(r, translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def angle(self) -> float:
        """Rotation angle in radians."""
        r = self.rotation
        sin_part = np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
        return float(np.arctan2(sin_part, (np.trace(r) - 1.0) / 2.0))


def skew(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    """Transform equivalent to applying ``first`` and then ``second``."""
    r = second.rotation @ first.rotation
    # re-orthonormalize so long ICP chains keep the rotation invariant
    u, _, vt = np.linalg.svd(r)
    r = u @ vt
    return RigidTransform(r, second.rotation @ first.translation + second.translation)


def synthesize(model: MorphableModel, params: ParamVector) -> FaceMesh:
    if params.normalized:
        raise NormalizationStateError("synthesize needs raw parameters; denormalize first")
    if params.shape.size != model.n_shape or params.expr.size != model.n_expr:
        raise DimensionError(
            f"params ({params.shape.size}, {params.expr.size}) do not match "
            f"model ({model.n_shape}, {model.n_expr})"
        )
    flat = model.mean_face + model.shape_basis @ params.shape + model.expr_basis @ params.expr
    return FaceMesh(flat.reshape(-1, 3), model.triangles)


def apply_pose(mesh: FaceMesh, xf: RigidTransform) -> FaceMesh:
    return FaceMesh(xf.apply(mesh.vertices), mesh.triangles)


def face_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unnormalized face normals; their length is twice the triangle area."""
    v = vertices[triangles]
    return np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])


def vertex_normals(mesh: FaceMesh, vertex_ids=None) -> np.ndarray:
    """Area-weighted unit vertex normals.

    With ``vertex_ids`` only those rows are returned (still computed from every
    triangle incident to them). Raises if a requested vertex has no incident
    non-degenerate triangle.
    """
    if mesh.triangles.shape[0] == 0:
        raise ValidationError("mesh has no triangles")
    fn = face_normals(mesh.vertices, mesh.triangles)
    acc = np.zeros_like(mesh.vertices)
    for corner in range(3):
        np.add.at(acc, mesh.triangles[:, corner], fn)
    if vertex_ids is not None:
        vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
        acc = acc[vertex_ids]
    else:
        vertex_ids = np.arange(mesh.n_vertices)
    norms = np.linalg.norm(acc, axis=1)
    scale = float(np.abs(mesh.vertices).max()) or 1.0
    bad = np.nonzero(norms <= 1e-14 * scale**2)[0]
    if bad.size:
        raise ValidationError(f"vertex {int(vertex_ids[bad[0]])} has no incident non-degenerate triangle")
    return acc / norms[:, None]


def normalize_params(params: ParamVector, stats: ParamStats | None) -> ParamVector:
    if stats is None:
        raise ValidationError("normalization statistics are missing")
    if params.normalized:
        raise NormalizationStateError("parameters are already normalized")
    x = params.stacked()
    if x.size != stats.mean.size:
        raise DimensionError(f"{x.size} parameters vs {stats.mean.size} statistics")
    return ParamVector.from_stacked((x - stats.mean) / stats.std, params.shape.size, normalized=True)


def denormalize_params(params: ParamVector, stats: ParamStats | None) -> ParamVector:
    if stats is None:
        raise ValidationError("normalization statistics are missing")
    if not params.normalized:
        raise NormalizationStateError("parameters are not normalized")
    x = params.stacked()
    if x.size != stats.mean.size:
        raise DimensionError(f"{x.size} parameters vs {stats.mean.size} statistics")
    return ParamVector.from_stacked(x * stats.std + stats.mean, params.shape.size, normalized=False)


def param_stats_from_samples(raw: np.ndarray) -> ParamStats:
    """Empirical per-coefficient statistics of a (samples, P_s + P_e) array."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise DimensionError("need a 2-D array with at least two samples")
    return ParamStats(raw.mean(axis=0), raw.std(axis=0))
