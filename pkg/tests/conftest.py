import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rici.corpus import generate_mesh, write_corpus  # noqa: E402
from rici.mesh import TriangleMesh, area_weighted_vertex_normals, normalize_to_unit_sphere  # noqa: E402


def mesh_from(vertices, triangles) -> TriangleMesh:
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    return TriangleMesh(v, area_weighted_vertex_normals(v, t), t)


def quad(size: float = 10.0, z: float = 0.0, normal_up: bool = True) -> TriangleMesh:
    """A large square in the plane z = ``z``, centred on the origin."""
    s = size
    v = [(-s, -s, z), (s, -s, z), (s, s, z), (-s, s, z)]
    t = [(0, 1, 2), (0, 2, 3)] if normal_up else [(0, 2, 1), (0, 3, 2)]
    return mesh_from(v, t)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Procedural 60-mesh corpus (OBJ and PLY) shared by the harness tests."""
    d = tmp_path_factory.mktemp("corpus")
    write_corpus(d, count=60, seed=2020)
    return d


@pytest.fixture(scope="session")
def small_meshes():
    return [normalize_to_unit_sphere(generate_mesh(11, i))[0] for i in range(12)]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture()
def acceptance(capsys):
    """Record one acceptance verdict and print it immediately, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
