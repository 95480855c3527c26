"""Recover morphable-model coefficients from 3D landmarks by ridge least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular

from .errors import DimensionError, SingularSystemError, ValidationError
from .model import MorphableModel, ParamVector, synthesize

ANCHOR_NAMES = tuple("ABCDEFGHIJ")
REGION_NAMES = ("left_eye", "right_eye", "nose", "mouth", "left_cheek", "right_cheek")
N_LANDMARKS = 68

# relative threshold on the R diagonal of the augmented QR
RANK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class LandmarkSpec:
    """Named anchor vertices, the 68-point landmark set, and six face regions."""

    anchors: dict
    landmarks68: np.ndarray
    regions: dict

    def __post_init__(self):
        missing = [a for a in ANCHOR_NAMES if a not in self.anchors]
        if missing:
            raise ValidationError(f"missing anchors: {', '.join(missing)}")
        extra = set(self.anchors) - set(ANCHOR_NAMES)
        if extra:
            raise ValidationError(f"unknown anchors: {', '.join(sorted(extra))}")
        anchors = {k: int(self.anchors[k]) for k in ANCHOR_NAMES}
        lm = np.asarray(self.landmarks68, dtype=np.int64).ravel()
        if lm.size != N_LANDMARKS:
            raise ValidationError(f"expected {N_LANDMARKS} landmarks, got {lm.size}")
        missing = [r for r in REGION_NAMES if r not in self.regions]
        if missing:
            raise ValidationError(f"missing region: {missing[0]}")
        extra = set(self.regions) - set(REGION_NAMES)
        if extra:
            raise ValidationError(f"unknown regions: {', '.join(sorted(extra))}")
        regions = {}
        seen = set()
        for name in REGION_NAMES:
            ids = np.asarray(self.regions[name], dtype=np.int64).ravel()
            if ids.size == 0:
                raise ValidationError(f"region {name} is empty")
            if np.unique(ids).size != ids.size:
                raise ValidationError(f"region {name} has duplicate vertices")
            overlap = seen.intersection(ids.tolist())
            if overlap:
                raise ValidationError(f"region {name} overlaps another region at vertex {min(overlap)}")
            seen.update(ids.tolist())
            regions[name] = ids
        every = np.concatenate([lm, np.array(list(anchors.values())), *regions.values()])
        if every.min() < 0:
            raise ValidationError("negative vertex index in landmark spec")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "landmarks68", lm)
        object.__setattr__(self, "regions", regions)

    def max_index(self) -> int:
        return int(max(self.landmarks68.max(), max(self.anchors.values()),
                       *(r.max() for r in self.regions.values())))

    def check_model(self, n_vertices: int) -> None:
        if self.max_index() >= n_vertices:
            raise ValidationError(f"landmark spec index {self.max_index()} out of range for N={n_vertices}")


@dataclass(frozen=True)
class FitConfig:
    shape_reg: float = 1e-4
    expr_reg: float = 1e-4

    def __post_init__(self):
        for v in (self.shape_reg, self.expr_reg):
            if not np.isfinite(v) or v < 0:
                raise ValidationError("regularization weights must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: ParamVector
    residual: float
    objective: float


def landmark_rows(indices: np.ndarray) -> np.ndarray:
    """Flat-vector rows holding x, y, z of the given vertices."""
    indices = np.asarray(indices, dtype=np.int64)
    return (3 * indices[:, None] + np.arange(3)).ravel()


def landmark_system(model: MorphableModel, spec: LandmarkSpec):
    """Design matrix ``[V_s | V_e]`` and mean restricted to the 68 landmarks."""
    spec.check_model(model.n_vertices)
    rows = landmark_rows(spec.landmarks68)
    design = np.hstack([model.shape_basis[rows], model.expr_basis[rows]])
    return design, model.mean_face[rows]


def _check_targets(targets) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (N_LANDMARKS, 3):
        raise DimensionError(f"targets must be ({N_LANDMARKS}, 3), got {targets.shape}")
    if not np.all(np.isfinite(targets)):
        raise ValidationError("targets must be finite")
    return targets


def residual(model: MorphableModel, spec: LandmarkSpec, targets, params: ParamVector) -> float:
    """Squared landmark error ``||L(params) - targets||^2`` without regularization."""
    targets = _check_targets(targets)
    spec.check_model(model.n_vertices)
    mesh = synthesize(model, params)
    diff = mesh.vertices[spec.landmarks68] - targets
    return float(np.sum(diff * diff))


def fit(model: MorphableModel, spec: LandmarkSpec, targets, cfg: FitConfig | None = None) -> FitResult:
    """Minimize ``||L(a) - targets||^2 + shape_reg ||a_s||^2 + expr_reg ||a_e||^2``.

    The ridge problem is solved as an augmented least-squares system with a
    column-pivoted Householder QR. A rank-deficient system raises instead of silently
    returning a pseudo-inverse solution.
    """
    cfg = cfg or FitConfig()
    targets = _check_targets(targets)
    design, mean_rows = landmark_system(model, spec)
    ps, pe = model.n_shape, model.n_expr
    reg = np.concatenate([np.full(ps, np.sqrt(cfg.shape_reg)), np.full(pe, np.sqrt(cfg.expr_reg))])
    a = np.vstack([design, np.diag(reg)])
    b = np.concatenate([targets.ravel() - mean_rows, np.zeros(ps + pe)])

    q, r, perm = qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[-1] <= RANK_RTOL * max(diag[0], np.finfo(float).tiny):
        raise SingularSystemError(
            "landmark system is rank deficient; use a positive regularization or another landmark set"
        )
    alpha = np.empty(ps + pe)
    alpha[perm] = solve_triangular(r, q.T @ b)
    params = ParamVector.from_stacked(alpha, ps)
    res = float(np.sum((design @ alpha - (targets.ravel() - mean_rows)) ** 2))
    obj = res + cfg.shape_reg * float(params.shape @ params.shape) + cfg.expr_reg * float(params.expr @ params.expr)
    return FitResult(params, res, obj)


def objective(model: MorphableModel, spec: LandmarkSpec, targets, params: ParamVector, cfg: FitConfig) -> float:
    return (residual(model, spec, targets, params)
            + cfg.shape_reg * float(params.shape @ params.shape)
            + cfg.expr_reg * float(params.expr @ params.expr))
