"""Seeded desk-scale stand-ins for a licensed face model and a paired voice/face dataset.

All randomness comes from ``Generator(PCG64(SeedSequence([seed, stream])))``
with a fixed stream per use, so a seed pins every array bit-for-bit on any
platform with IEEE doubles.

Mean face
    ``N`` points on a Vogel (sunflower) spiral in the unit disc are mapped to
    the front of an ellipsoid (semi-axes 0.75, 1.0, 0.6 along x, y, z) with a
    nose bump and a slight chin taper, and triangulated by a Delaunay
    triangulation of the disc points. Faces point towards +z.

Bases
    Shape column 0 widens the face more at the sides than at the centre
    (``dx ~ x^3``), so its coefficient moves the ear-to-eye ratio. The other
    columns are seeded Gaussian vertex fields smoothed on the mesh, and all
    ``P_s + P_e`` columns are orthonormalized together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import ValidationError
from .fitting import ANCHOR_NAMES, N_LANDMARKS, LandmarkSpec, landmark_system
from .model import MorphableModel, ParamStats, ParamVector, denormalize_params, synthesize
from .metrics import MIN_REGION_VERTICES

SEMI_AXES = (0.75, 1.0, 0.6)
MIN_VERTICES = 12
MAX_ATTEMPTS = 10
RANK_FLOOR = 1e-6

# anchor targets as fractions of the mean face's half-width/half-height (x, y)
ANCHOR_TARGETS = {
    "C": (-0.55, 0.75),
    "D": (0.55, 0.75),
    "E": (-0.55, 0.3),
    "F": (0.55, 0.3),
    "G": (0.0, 0.95),
    "H": (0.0, -0.95),
    "I": (-0.8, -0.2),
    "J": (0.8, -0.2),
}

# half-open boxes [x0, x1) x [y0, y1) in the same normalized frame
REGION_BOXES = {
    "left_eye": ((-0.6, -0.15), (0.1, 0.45)),
    "right_eye": ((0.15, 0.6), (0.1, 0.45)),
    "nose": ((-0.15, 0.15), (-0.25, 0.3)),
    "mouth": ((-0.35, 0.35), (-0.65, -0.3)),
    "left_cheek": ((-0.85, -0.4), (-0.5, 0.05)),
    "right_cheek": ((0.4, 0.85), (-0.5, 0.05)),
}


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    n_vertices: int = 500
    n_shape: int = 40
    n_expr: int = 10
    n_identities: int = 1000
    embedding_dim: int = 64
    noise_sigma: float = 0.0
    hidden_map_scale: float = 1.0

    def __post_init__(self):
        for name in ("n_vertices", "n_shape", "n_expr", "n_identities", "embedding_dim"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be positive")
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be finite and >= 0")
        if not np.isfinite(self.hidden_map_scale) or self.hidden_map_scale <= 0:
            raise ValidationError("hidden_map_scale must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired samples: embeddings ``(S, D)``, normalized params ``(S, P)``, landmarks ``(S, 68, 3)``."""

    embeddings: np.ndarray
    params: np.ndarray
    landmarks: np.ndarray
    n_shape: int

    def __len__(self):
        return self.embeddings.shape[0]

    def sample(self, i: int) -> tuple[np.ndarray, ParamVector, np.ndarray]:
        return (self.embeddings[i],
                ParamVector.from_stacked(self.params[i], self.n_shape, normalized=True),
                self.landmarks[i])


def rng_for(seed: int, *stream) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


def _template(n: int):
    k = np.arange(n) + 0.5
    r = np.sqrt(k / n)
    theta = k * np.pi * (3.0 - np.sqrt(5.0))
    disc = np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    a, b, c = SEMI_AXES
    lon = disc[:, 0] * (np.pi / 2) * 0.85
    lat = disc[:, 1] * (np.pi / 2) * 0.8
    x = a * np.cos(lat) * np.sin(lon)
    y = b * np.sin(lat)
    z = c * np.cos(lat) * np.cos(lon)
    z = z + 0.18 * np.exp(-((x / 0.12) ** 2 + ((y + 0.05) / 0.25) ** 2))
    x = x * (1.0 - 0.15 * np.clip(-y, 0.0, None))

    tri = Delaunay(disc).simplices.astype(np.int64)
    p = disc[tri]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return np.column_stack([x, y, z]), tri


def _adjacency_smoother(n: int, tri: np.ndarray):
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64)

    def smooth(field: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(field)
        np.add.at(acc, edges[:, 0], field[edges[:, 1]])
        np.add.at(acc, edges[:, 1], field[edges[:, 0]])
        return 0.5 * field + 0.5 * acc / deg[:, None, None]

    return smooth


def _bases(verts, tri, n_cols: int, rng, smooth_iters: int = 6) -> np.ndarray:
    n = verts.shape[0]
    smooth = _adjacency_smoother(n, tri)
    fields = rng.standard_normal((n, 3, n_cols))
    for _ in range(smooth_iters):
        fields = smooth(fields)
    widen = np.zeros((n, 3))
    widen[:, 0] = (verts[:, 0] / SEMI_AXES[0]) ** 3
    fields[:, :, 0] = widen
    q, r = np.linalg.qr(fields.reshape(3 * n, n_cols))
    q = q * np.sign(np.diag(r))
    return q


def _param_stats(ps: int, pe: int) -> ParamStats:
    shape_std = 0.6 / np.sqrt(np.arange(1, ps + 1))
    shape_std[0] = 1.5
    expr_std = 0.3 / np.sqrt(np.arange(1, pe + 1))
    return ParamStats(np.zeros(ps + pe), np.concatenate([shape_std, expr_std]))


def gen_model(cfg: SyntheticConfig | None = None) -> MorphableModel:
    """Generate a morphable model; deterministic per ``cfg.seed``.

    When ``N >= 68`` the 68-landmark system is checked for full column rank and
    the bases are redrawn from the next seed stream if it is not.
    """
    cfg = cfg or SyntheticConfig()
    n, ps, pe = int(cfg.n_vertices), int(cfg.n_shape), int(cfg.n_expr)
    if n < MIN_VERTICES:
        raise ValidationError(f"need at least {MIN_VERTICES} vertices, got {n}")
    if ps + pe > 3 * n:
        raise ValidationError("P_s + P_e cannot exceed 3N")
    verts, tri = _template(n)
    stats = _param_stats(ps, pe)
    for attempt in range(MAX_ATTEMPTS):
        basis = _bases(verts, tri, ps + pe, rng_for(cfg.seed, 1, attempt))
        model = MorphableModel(
            verts.ravel(), basis[:, :ps], basis[:, ps:], tri, stats,
            provenance={"generator": "facekit.synthetic", "seed": int(cfg.seed), "attempt": attempt},
        )
        if n < N_LANDMARKS or landmark_rank_margin(model) > RANK_FLOOR:
            return model
    raise ValidationError(f"no full-rank landmark system after {MAX_ATTEMPTS} attempts")


def landmark_rank_margin(model: MorphableModel, spec: LandmarkSpec | None = None) -> float:
    """Smallest singular value of the landmark-restricted basis."""
    spec = spec or gen_landmark_spec(model)
    design, _ = landmark_system(model, spec)
    return float(np.linalg.svd(design, compute_uv=False)[-1])


def _normalized_xy(verts: np.ndarray) -> np.ndarray:
    lo, hi = verts[:, :2].min(axis=0), verts[:, :2].max(axis=0)
    half = (hi - lo) / 2
    if np.any(half <= 0):
        raise ValidationError("model has a degenerate x or y extent")
    return (verts[:, :2] - (lo + hi) / 2) / half


def gen_landmark_spec(model: MorphableModel) -> LandmarkSpec:
    """Anchors, 68 landmarks and six regions for a synthetic model.

    A/B are the min/max-x vertices. The other anchors are the vertices nearest
    (in bbox-normalized x, y) to ``ANCHOR_TARGETS``. Landmarks come from
    farthest-point sampling over vertices facing +z, starting at the vertex
    with the largest z. Regions are the vertices inside ``REGION_BOXES``, topped up with the
    nearest free vertices when a box holds too few for a rigid solve.
    """
    verts = model.mean_face.reshape(-1, 3)
    n = verts.shape[0]
    xy = _normalized_xy(verts)

    anchors = {"A": int(np.argmin(verts[:, 0])), "B": int(np.argmax(verts[:, 0]))}
    for name, target in ANCHOR_TARGETS.items():
        anchors[name] = int(np.argmin(np.sum((xy - np.asarray(target)) ** 2, axis=1)))
    if anchors["E"] == anchors["F"]:
        raise ValidationError("outer eye corners coincide; model too coarse")

    front = np.nonzero(verts[:, 2] >= np.median(verts[:, 2]) * 0.5)[0]
    if front.size < N_LANDMARKS:
        front = np.arange(n)
    if front.size < N_LANDMARKS:
        raise ValidationError(f"need at least {N_LANDMARKS} vertices for landmarks")
    pts = verts[front]
    chosen = [int(np.argmax(pts[:, 2]))]
    d2 = np.sum((pts - pts[chosen[0]]) ** 2, axis=1)
    for _ in range(N_LANDMARKS - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    landmarks = front[np.array(chosen)]

    regions = {}
    taken = np.zeros(n, dtype=bool)
    for name, ((x0, x1), (y0, y1)) in REGION_BOXES.items():
        inside = (xy[:, 0] >= x0) & (xy[:, 0] < x1) & (xy[:, 1] >= y0) & (xy[:, 1] < y1)
        regions[name] = np.nonzero(inside)[0]
        taken |= inside
    # coarse meshes: top up small boxes with the nearest free vertices to the box centre
    for name, ((x0, x1), (y0, y1)) in REGION_BOXES.items():
        short = MIN_REGION_VERTICES - regions[name].size
        if short <= 0:
            continue
        free = np.nonzero(~taken)[0]
        if free.size < short:
            raise ValidationError(f"region {name} cannot reach {MIN_REGION_VERTICES} vertices; model too coarse")
        d2 = np.sum((xy[free] - [(x0 + x1) / 2, (y0 + y1) / 2]) ** 2, axis=1)
        extra = free[np.argsort(d2, kind="stable")[:short]]
        regions[name] = np.sort(np.concatenate([regions[name], extra]))
        taken[extra] = True
    return LandmarkSpec({k: anchors[k] for k in ANCHOR_NAMES}, landmarks, regions)


def hidden_map(cfg: SyntheticConfig, n_params: int) -> np.ndarray:
    """The seeded linear map from normalized parameters to embeddings."""
    rng = rng_for(cfg.seed, 2)
    return rng.standard_normal((cfg.embedding_dim, n_params)) * (cfg.hidden_map_scale / np.sqrt(n_params))


def gen_dataset(model: MorphableModel, cfg: SyntheticConfig | None = None,
                spec: LandmarkSpec | None = None) -> Dataset:
    cfg = cfg or SyntheticConfig()
    if model.param_stats is None:
        raise ValidationError("dataset generation needs a model with param_stats")
    spec = spec or gen_landmark_spec(model)
    p = model.n_shape + model.n_expr
    s = int(cfg.n_identities)
    rng = rng_for(cfg.seed, 3)
    params = rng.standard_normal((s, p))
    emb = params @ hidden_map(cfg, p).T
    if cfg.noise_sigma > 0:
        emb = emb + cfg.noise_sigma * rng_for(cfg.seed, 4).standard_normal(emb.shape)
    landmarks = np.empty((s, N_LANDMARKS, 3))
    for i in range(s):
        raw = denormalize_params(ParamVector.from_stacked(params[i], model.n_shape, normalized=True),
                                 model.param_stats)
        landmarks[i] = synthesize(model, raw).vertices[spec.landmarks68]
    return Dataset(emb, params, landmarks, model.n_shape)
