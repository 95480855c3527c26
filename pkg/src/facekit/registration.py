"""Rigid point-to-plane ICP between a predicted and a reference mesh."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError, NumericalError, SingularSystemError, ValidationError
from .model import FaceMesh, RigidTransform, compose, skew, vertex_normals

_TIE_RTOL = 1e-12


class NearestNeighborIndex:
    """Exact Euclidean nearest-neighbour queries over a fixed point set.

    Ties are broken towards the lower stored index, so results match an
    exhaustive ``argmin`` over squared distances.
    """

    def __init__(self, points):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionError(f"points must be (M, 3), got {points.shape}")
        if points.shape[0] == 0:
            raise ValidationError("cannot index an empty point set")
        if not np.all(np.isfinite(points)):
            raise ValidationError("indexed points must be finite")
        self.points = points
        self._tree = cKDTree(points)
        self._k = min(8, points.shape[0])

    def __len__(self):
        return self.points.shape[0]

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, distances)`` of the nearest stored point per query."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if q.shape[1] != 3:
            raise DimensionError("queries must have 3 columns")
        _, cand = self._tree.query(q, k=self._k)
        cand = cand.reshape(q.shape[0], self._k)
        # re-rank candidates with the same arithmetic as a linear scan
        d2 = np.sum((self.points[cand] - q[:, None, :]) ** 2, axis=2)
        order = np.lexsort((cand, d2), axis=1)
        best = np.take_along_axis(cand, order[:, :1], axis=1)[:, 0]
        best_d2 = np.take_along_axis(d2, order[:, :1], axis=1)[:, 0]
        if self._k < len(self):
            # if every candidate ties with the best, more tied points may lie outside the k
            worst = d2.max(axis=1)
            crowded = np.nonzero(worst <= best_d2 * (1 + _TIE_RTOL) + 1e-300)[0]
            for i in crowded:
                full = np.sum((self.points - q[i]) ** 2, axis=1)
                best[i] = int(np.argmin(full))
                best_d2[i] = full[best[i]]
        return best, np.sqrt(best_d2)


def build_spatial_index(points) -> NearestNeighborIndex:
    return NearestNeighborIndex(points)


@dataclass(frozen=True)
class IcpConfig:
    max_iters: int = 50
    rel_tol: float = 1e-6
    reject_multiplier: float = 3.0
    seed_transform: RigidTransform | None = None

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be positive")
        for name in ("rel_tol", "reject_multiplier"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"{name} must be positive and finite")


@dataclass(frozen=True, eq=False)
class IcpResult:
    transform: RigidTransform
    rmse: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def estimate_rigid_point_to_plane(src, dst, dst_normals, inner_iters: int = 5) -> RigidTransform:
    """Rigid transform minimizing ``sum(((R s + t - d) . n)^2)`` for fixed pairs.

    Each pass linearizes ``R ~ I + [w]x`` about the current estimate, solves the
    6x6 problem (points centred and scaled for conditioning) and projects
    ``I + [w]x`` onto the nearest rotation. Up to ``inner_iters`` passes are
    chained, which removes the second-order bias of a single pass.

    Raises :class:`SingularSystemError` when the normals leave some motion
    unconstrained; the error carries the minimum-norm transform of the first
    pass and the unconstrained ``(w, t)`` directions.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    nrm = np.asarray(dst_normals, dtype=np.float64)
    if not (src.shape == dst.shape == nrm.shape) or src.ndim != 2 or src.shape[1] != 3:
        raise DimensionError("src, dst and normals must all be (K, 3)")
    if src.shape[0] < 6:
        raise ValidationError("need at least 6 correspondences")
    if np.abs(np.linalg.norm(nrm, axis=1) - 1.0).max() > 1e-6:
        raise ValidationError("normals must be unit length")
    if inner_iters < 1:
        raise ValidationError("inner_iters must be >= 1")

    xf = RigidTransform.identity()
    moved = src
    for k in range(inner_iters):
        step, null = _linear_step(moved, dst, nrm)
        if null is not None:
            if k == 0:
                raise SingularSystemError(
                    f"point-to-plane system has rank {6 - null.shape[0]} < 6", partial=step, null_space=null)
            break
        xf = compose(step, xf)
        moved = xf.apply(src)
        if step.angle() < 1e-15 and np.linalg.norm(step.translation) < 1e-15 * (1.0 + np.abs(dst).max()):
            break
    return xf


def _linear_step(src, dst, nrm):
    centre = src.mean(axis=0)
    s = src - centre
    scale = np.sqrt(np.mean(np.sum(s * s, axis=1))) or 1.0
    s = s / scale
    jac = np.hstack([np.cross(s, nrm), nrm])
    r = np.einsum("ij,ij->i", src - dst, nrm) / scale

    u, sv, vt = np.linalg.svd(jac, full_matrices=False)
    rank_ok = sv > 1e-9 * sv[0] if sv[0] > 0 else np.zeros(6, bool)
    coef = np.where(rank_ok, (u.T @ -r) / np.where(rank_ok, sv, 1.0), 0.0)
    x = vt.T @ coef
    xf = _transform_from_increment(x[:3], x[3:] * scale, centre)
    return xf, (None if rank_ok.all() else vt[~rank_ok])


def _transform_from_increment(w, t_centred, centre) -> RigidTransform:
    u, _, vt = np.linalg.svd(np.eye(3) + skew(w))
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] *= -1
        rot = u @ vt
    # the solve was about the centroid: p -> R (p - c) + c + t
    return RigidTransform(rot, centre + t_centred - rot @ centre)


def point_to_plane_rmse(src, target: FaceMesh | np.ndarray, target_normals,
                        index: NearestNeighborIndex | None = None) -> float:
    """RMS of normal-projected residuals to each point's nearest target vertex."""
    src = np.asarray(src, dtype=np.float64)
    tpts = target.vertices if isinstance(target, FaceMesh) else np.asarray(target, dtype=np.float64)
    nrm = np.asarray(target_normals, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] == 0 or tpts.shape[0] == 0:
        raise ValidationError("point_to_plane_rmse needs non-empty inputs")
    if nrm.shape != tpts.shape:
        raise DimensionError("target normals must match target vertices")
    index = index or NearestNeighborIndex(tpts)
    nn, _ = index.query(src)
    d = np.einsum("ij,ij->i", src - tpts[nn], nrm[nn])
    return float(np.sqrt(np.mean(d * d)))


def icp_points(src, tgt, tgt_normals, cfg: IcpConfig | None = None) -> IcpResult:
    """ICP over raw point sets; ``tgt_normals`` are per-target-point unit normals."""
    cfg = cfg or IcpConfig()
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    tgt_normals = np.asarray(tgt_normals, dtype=np.float64)
    if src.shape[0] == 0 or tgt.shape[0] == 0:
        raise ValidationError("icp needs non-empty point sets")
    index = NearestNeighborIndex(tgt)
    diag = float(np.linalg.norm(tgt.max(axis=0) - tgt.min(axis=0))) or 1.0
    floor = 1e-14 * diag

    xf = cfg.seed_transform or RigidTransform.identity()
    moved = xf.apply(src)
    rmse = point_to_plane_rmse(moved, tgt, tgt_normals, index)
    history = [rmse]
    if rmse <= floor:
        return IcpResult(xf, rmse, 0, True, history)

    converged = False
    iterations = 0
    cur_xf, cur_moved, cur_rmse = xf, moved, rmse
    for _ in range(int(cfg.max_iters)):
        iterations += 1
        nn, dist = index.query(cur_moved)
        keep = dist <= cfg.reject_multiplier * np.median(dist)
        if keep.sum() < 6:
            keep[:] = True
        try:
            step = estimate_rigid_point_to_plane(cur_moved[keep], tgt[nn[keep]], tgt_normals[nn[keep]])
        except SingularSystemError as exc:
            # repeated correspondences on small patches; unconstrained motions
            # leave this iteration's objective unchanged, so take the min-norm step
            step = exc.partial
        cur_xf = compose(step, cur_xf)
        cur_moved = cur_xf.apply(src)
        new_rmse = point_to_plane_rmse(cur_moved, tgt, tgt_normals, index)
        if not np.isfinite(new_rmse):
            raise NumericalError("ICP produced a non-finite RMSE")
        change = abs(cur_rmse - new_rmse) / max(cur_rmse, floor)
        cur_rmse = new_rmse
        # a pose is accepted only if it improves on the best so far; uphill
        # iterates are still followed, since correspondences may need to settle
        if new_rmse < rmse:
            xf, rmse = cur_xf, new_rmse
            history.append(rmse)
        if rmse <= floor or change < cfg.rel_tol:
            converged = True
            break
    return IcpResult(xf, rmse, iterations, converged, history)


def icp(source: FaceMesh, target: FaceMesh, cfg: IcpConfig | None = None) -> IcpResult:
    """Register ``source`` onto ``target``; source vertices query the target."""
    return icp_points(source.vertices, target.vertices, vertex_normals(target), cfg)
