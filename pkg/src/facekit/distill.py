"""Probabilistic knowledge-transfer losses between teacher and student embeddings.

For a batch ``z`` (B rows), the kernel ``K(u, v) = (cos(u, v) + 1) / 2`` and the
conditional probability that sample ``j`` picks ``i`` as its neighbour is::

    P[i, j] = K(z_i, z_j) / (sum_{k != j} K(z_k, z_j) + eps),   P[j, j] = 0

so every column of ``P`` is a distribution. The divergence loss is the sum of
per-column KL divergences ``KL(P_teacher[:, j] || P_student[:, j])``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ValidationError
from .model import ParamVector

EPS = 1e-12


def as_batch(z) -> np.ndarray:
    """Validate an embedding batch, collapsing non-batch axes row-major."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim < 2:
        raise DimensionError("an embedding batch needs a batch axis and a feature axis")
    z = z.reshape(z.shape[0], -1)
    if z.shape[0] < 2:
        raise ValidationError("an embedding batch needs at least 2 rows")
    if not np.all(np.isfinite(z)):
        raise ValidationError("embedding batch must be finite")
    if np.any(np.linalg.norm(z, axis=1) == 0):
        raise ValidationError("embedding rows must have nonzero norm")
    return z


def cosine_kernel(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValidationError("cosine kernel is undefined for zero vectors")
    return float(0.5 * (u @ v / (nu * nv) + 1.0))


def kernel_matrix(z) -> np.ndarray:
    z = as_batch(z)
    u = z / np.linalg.norm(z, axis=1, keepdims=True)
    return 0.5 * (u @ u.T + 1.0)


def conditional_probabilities(z) -> np.ndarray:
    k = kernel_matrix(z)
    np.fill_diagonal(k, 0.0)
    return k / (k.sum(axis=0, keepdims=True) + EPS)


def _pair(teacher, student):
    t, s = as_batch(teacher), as_batch(student)
    if t.shape[0] != s.shape[0]:
        raise DimensionError(f"teacher batch {t.shape[0]} vs student batch {s.shape[0]}")
    return t, s


def divergence_loss(teacher, student) -> float:
    t, s = _pair(teacher, student)
    p = conditional_probabilities(t)
    q = conditional_probabilities(s)
    off = ~np.eye(p.shape[0], dtype=bool)
    return float(np.sum(p[off] * np.log((p[off] + EPS) / (q[off] + EPS))))


def divergence_grad(teacher, student) -> np.ndarray:
    """Gradient of :func:`divergence_loss` with respect to the student batch."""
    t, s = _pair(teacher, student)
    b = s.shape[0]
    off = ~np.eye(b, dtype=bool)
    p = conditional_probabilities(t)

    norms = np.linalg.norm(s, axis=1, keepdims=True)
    u = s / norms
    k = 0.5 * (u @ u.T + 1.0)
    k[~off] = 0.0
    col = k.sum(axis=0, keepdims=True) + EPS
    q = k / col

    g = np.where(off, -p / (q + EPS), 0.0)  # dL/dq
    # q[i, j] = k[i, j] / col[j]
    dk = g / col - np.sum(g * k, axis=0, keepdims=True) / col**2
    dk[~off] = 0.0
    # k is symmetric in the cosine matrix; k = (c + 1) / 2
    dc = 0.25 * (dk + dk.T)
    du = 2.0 * dc @ u
    return (du - u * np.sum(du * u, axis=1, keepdims=True)) / norms


def pseudo_gt_loss(teacher_params: ParamVector, student_params: ParamVector) -> tuple[float, ParamVector]:
    """Squared parameter error to the teacher's pseudo ground truth, and its gradient."""
    if (teacher_params.shape.size != student_params.shape.size
            or teacher_params.expr.size != student_params.expr.size):
        raise DimensionError("teacher and student parameter dimensions differ")
    ds = student_params.shape - teacher_params.shape
    de = student_params.expr - teacher_params.expr
    loss = float(ds @ ds + de @ de)
    return loss, ParamVector(2.0 * ds, 2.0 * de, student_params.normalized)


def kd_loss(teacher_emb, student_emb, teacher_params: ParamVector, student_params: ParamVector,
            div_weight: float = 1.0) -> tuple[float, np.ndarray, ParamVector]:
    """``pseudo_gt_loss + div_weight * divergence_loss`` with both student gradients.

    ``div_weight=1`` is the plain unweighted sum.
    """
    lp, gp = pseudo_gt_loss(teacher_params, student_params)
    ld = divergence_loss(teacher_emb, student_emb)
    ge = divergence_grad(teacher_emb, student_emb)
    return lp + div_weight * ld, div_weight * ge, gp
