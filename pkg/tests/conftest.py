import numpy as np
import pytest

from synfem.mesh import unit_square


@pytest.fixture
def square2():
    return unit_square(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def write_mesh_text(path, verts, elems, bnd):
    lines = [f"{len(verts)} {len(elems)} {len(bnd)}"]
    lines += [f"{x} {y}" for x, y in verts]
    lines += [" ".join(map(str, e)) for e in elems]
    lines += [" ".join(map(str, b)) for b in bnd]
    path.write_text("\n".join(lines) + "\n")
    return path
