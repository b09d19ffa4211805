import numpy as np
import pytest

from core.ambient import minkowski
from core.catalog import catalog_build
from core.frame import HypersurfaceMap


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def hyperplane():
    return catalog_build('minkowski_null_hyperplane')


@pytest.fixture
def cone():
    return catalog_build('minkowski_null_cone')


@pytest.fixture
def desitter():
    return catalog_build('desitter_distance_graph', {'alpha': 0.5})


@pytest.fixture
def cylinder():
    return catalog_build('cylinder_l2', {'k': 1}, n=2)


@pytest.fixture
def grw_point():
    return catalog_build('grw_graph', {'profile': 'point'})


@pytest.fixture
def flat_slicing():
    return catalog_build('grw_graph', {'ambient': 'de_sitter_flat_slicing', 'profile': 'plane'})


@pytest.fixture
def ads_ball():
    return catalog_build('grw_graph', {'ambient': 'anti_de_sitter_ball'})


@pytest.fixture
def cylinder_n3():
    return catalog_build('cylinder_l2', {'k': 1}, n=3)


@pytest.fixture
def wavy():
    return catalog_build('wavy_graph')


@pytest.fixture
def spacelike_plane():
    """Negative control: x^0 = 0 is spacelike, its induced metric has no radical"""
    return HypersurfaceMap(
        name='spacelike_plane',
        ambient=minkowski(2),
        param=lambda u: [0.0] + list(u),
        domain=((-1.0, 1.0),) * 3,
    )


@pytest.fixture
def scenario_text():
    def make(name='minkowski_null_hyperplane', counts='[2, 2, 2]', checks=None, extra=''):
        enabled = '' if checks is None else 'enabled = [' + ', '.join(f'"{c}"' for c in checks) + ']'
        return f"""
[ambient]
dimension = 2

[hypersurface]
name = "{name}"
{extra}

[grid]
counts = {counts}

[tolerances]
default = 1e-7

[checks]
{enabled}
seed = 3
"""
    return make
