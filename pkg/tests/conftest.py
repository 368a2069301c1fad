import numpy as np
import pytest

from gmapkit import data_path, load_obj
from gmapkit.pipeline import build_geometric_map
from gmapkit.synthetic import synthetic_face


@pytest.fixture(scope="session")
def face():
    return synthetic_face()


@pytest.fixture(scope="session")
def face_build(face):
    return build_geometric_map(face.mesh, face.spec, resolution=128)


@pytest.fixture(scope="session")
def bundled():
    import json

    mesh = load_obj(data_path("synthetic_face.obj"))
    with open(data_path("synthetic_face_spec.json")) as fh:
        spec = json.load(fh)
    return mesh, spec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
