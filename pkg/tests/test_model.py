import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facekit.errors import DimensionError, NormalizationStateError, ValidationError
from facekit.model import (FaceMesh, MorphableModel, ParamStats, ParamVector, RigidTransform, apply_pose,
                           compose, denormalize_params, normalize_params, synthesize, vertex_normals)

from conftest import icosphere, random_model


def naive_synthesize(model, params):
    n3 = model.mean_face.size
    out = [0.0] * n3
    for r in range(n3):
        acc = model.mean_face[r]
        for c in range(model.n_shape):
            acc += model.shape_basis[r, c] * params.shape[c]
        for c in range(model.n_expr):
            acc += model.expr_basis[r, c] * params.expr[c]
        out[r] = acc
    return np.array(out).reshape(-1, 3)


def test_zero_params_give_mean(model):
    mesh = synthesize(model, model.zero_params())
    assert np.array_equal(mesh.vertices, model.mean_face.reshape(-1, 3))
    assert mesh.triangles is model.triangles


def test_single_column_linearity():
    mean = np.arange(9, dtype=float)
    basis = np.zeros((9, 1))
    basis[0, 0] = 1.0
    m = MorphableModel(mean, basis, np.zeros((9, 1)), [[0, 1, 2]])
    mesh = synthesize(m, ParamVector([2.0], [0.0]))
    expected = mean.copy()
    expected[0] += 2
    assert np.array_equal(mesh.vertices.ravel(), expected)


def test_matches_triple_loop_oracle():
    rng = np.random.default_rng(11)
    m = random_model(rng, n=50, ps=8, pe=4)
    p = ParamVector(rng.standard_normal(8), rng.standard_normal(4))
    assert np.abs(synthesize(m, p).vertices - naive_synthesize(m, p)).max() < 1e-12


def test_synthesize_rejects_bad_input(model):
    with pytest.raises(DimensionError):
        synthesize(model, ParamVector(np.zeros(3), np.zeros(model.n_expr)))
    with pytest.raises(NormalizationStateError):
        synthesize(model, ParamVector(np.zeros(model.n_shape), np.zeros(model.n_expr), normalized=True))


def test_model_invariants_enforced():
    with pytest.raises(DimensionError):
        MorphableModel(np.zeros(9), np.zeros((6, 2)), np.zeros((9, 1)), [[0, 1, 2]])
    with pytest.raises(ValidationError):
        MorphableModel(np.zeros(9), np.zeros((9, 2)), np.zeros((9, 1)), [[0, 1, 3]])
    with pytest.raises(ValidationError):
        ParamStats([0.0, 0.0], [1.0, 0.0])


@pytest.mark.parametrize("which", ["shape", "expr"])
def test_linearity(which):
    rng = np.random.default_rng(3)
    m = random_model(rng)
    a, b = 0.7, -1.3
    zero_s, zero_e = np.zeros(m.n_shape), np.zeros(m.n_expr)

    def draw():
        if which == "shape":
            return ParamVector(rng.standard_normal(m.n_shape), zero_e)
        return ParamVector(zero_s, rng.standard_normal(m.n_expr))

    p, q = draw(), draw()
    mix = ParamVector(a * p.shape + b * q.shape, a * p.expr + b * q.expr)
    mean = m.mean_face.reshape(-1, 3)
    lhs = synthesize(m, mix).vertices - mean
    rhs = a * (synthesize(m, p).vertices - mean) + b * (synthesize(m, q).vertices - mean)
    assert np.abs(lhs - rhs).max() < 1e-10


def test_pose_identity_and_canonical_rotation():
    mesh = FaceMesh([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]], [[0, 1, 2]])
    assert np.array_equal(apply_pose(mesh, RigidTransform()).vertices, mesh.vertices)
    rz = RigidTransform.from_axis_angle([0, 0, 1], np.pi / 2)
    assert np.allclose(apply_pose(mesh, rz).vertices[0], [0.0, 1.0, 0.0], atol=1e-15)


def test_compose_matches_sequential():
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((40, 3))
    mesh = FaceMesh(pts, [[0, 1, 2]])
    x1 = RigidTransform.from_axis_angle(rng.standard_normal(3), 0.4, rng.standard_normal(3))
    x2 = RigidTransform.from_axis_angle(rng.standard_normal(3), -1.1, rng.standard_normal(3))
    once = apply_pose(mesh, compose(x2, x1)).vertices
    seq = apply_pose(apply_pose(mesh, x1), x2).vertices
    assert np.abs(once - seq).max() < 1e-12


def test_pose_rejects_non_rotation():
    with pytest.raises(ValidationError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValidationError):
        RigidTransform(np.eye(3) * 1.01, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_pose_is_rigid(seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((20, 3))
    xf = RigidTransform.from_axis_angle(rng.standard_normal(3), rng.uniform(-np.pi, np.pi), rng.standard_normal(3) * 5)
    moved = apply_pose(FaceMesh(pts, np.zeros((0, 3), int)), xf).vertices
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(moved[:, None] - moved[None], axis=2)
    assert np.abs(d0 - d1).max() < 1e-9


def test_normals_single_triangle():
    mesh = FaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert np.allclose(vertex_normals(mesh), [[0, 0, 1]] * 3, atol=0)


def test_normals_cube_corner():
    # corner (1,1,1) of the unit cube with one equal-area triangle on each incident face, wound outward
    verts = [[1, 1, 1], [0, 1, 1], [1, 0, 1], [1, 1, 0]]
    tris = [[0, 1, 2], [0, 2, 3], [0, 3, 1]]
    n = vertex_normals(FaceMesh(verts, tris))
    assert np.allclose(n[0], np.ones(3) / np.sqrt(3), atol=1e-12)


def test_normals_icosphere_radial():
    mesh = icosphere(3)
    n = vertex_normals(mesh)
    radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    angles = np.degrees(np.arccos(np.clip(np.sum(n * radial, axis=1), -1, 1)))
    assert angles.max() < 5.0
    assert np.abs(np.linalg.norm(n, axis=1) - 1).max() < 1e-9


def test_normals_flip_with_winding(mean_mesh):
    n = vertex_normals(mean_mesh)
    flipped = vertex_normals(FaceMesh(mean_mesh.vertices, mean_mesh.triangles[:, ::-1]))
    assert np.abs(n + flipped).max() < 1e-12
    assert np.abs(np.linalg.norm(n, axis=1) - 1).max() < 1e-9


def test_normals_isolated_vertex_named():
    mesh = FaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], [[0, 1, 2]])
    with pytest.raises(ValidationError, match="vertex 3"):
        vertex_normals(mesh)


def test_normalize_examples():
    stats = ParamStats(np.ones(5), np.full(5, 2.0))
    p = ParamVector(np.full(3, 5.0), np.full(2, 5.0))
    out = normalize_params(p, stats)
    assert out.normalized and np.array_equal(out.stacked(), np.full(5, 2.0))
    at_mean = normalize_params(ParamVector(np.ones(3), np.ones(2)), stats)
    assert np.array_equal(at_mean.stacked(), np.zeros(5))


def test_normalize_errors():
    stats = ParamStats(np.zeros(2), np.ones(2))
    p = ParamVector([1.0], [2.0])
    with pytest.raises(ValidationError):
        normalize_params(p, None)
    with pytest.raises(NormalizationStateError):
        denormalize_params(p, stats)
    with pytest.raises(NormalizationStateError):
        normalize_params(normalize_params(p, stats), stats)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalize_round_trip(seed):
    rng = np.random.default_rng(seed)
    stats = ParamStats(rng.standard_normal(12), rng.uniform(0.1, 3.0, 12))
    p = ParamVector(rng.standard_normal(8) * 3, rng.standard_normal(4) * 3)
    back = denormalize_params(normalize_params(p, stats), stats)
    assert not back.normalized
    assert np.abs(back.stacked() - p.stacked()).max() < 1e-12
