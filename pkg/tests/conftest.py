import numpy as np
import pytest

from facekit.model import FaceMesh, MorphableModel, ParamStats
from facekit.synthetic import SyntheticConfig, gen_landmark_spec, gen_model


@pytest.fixture(scope="session")
def model():
    return gen_model(SyntheticConfig(seed=0))


@pytest.fixture(scope="session")
def spec(model):
    return gen_landmark_spec(model)


@pytest.fixture(scope="session")
def mean_mesh(model):
    return model.mean_mesh()


def random_model(rng, n=50, ps=8, pe=4, stats=True):
    """Unstructured random model: Gaussian mean and bases, random triangles."""
    tri = np.array([rng.choice(n, 3, replace=False) for _ in range(max(1, n // 2))])
    st = ParamStats(rng.standard_normal(ps + pe), rng.uniform(0.5, 2.0, ps + pe)) if stats else None
    return MorphableModel(rng.standard_normal(3 * n), rng.standard_normal((3 * n, ps)),
                          rng.standard_normal((3 * n, pe)), tri, st)


def icosphere(subdivisions=2):
    t = (1 + 5 ** 0.5) / 2
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache, new_faces = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return FaceMesh(np.array(verts), np.array(faces))


def random_rotation(rng, max_deg):
    from facekit.model import RigidTransform

    return RigidTransform.from_axis_angle(rng.standard_normal(3), np.deg2rad(rng.uniform(0, max_deg)))


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
