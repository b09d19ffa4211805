import numpy as np
import pytest

from core.ambient import scaled_minkowski
from core.catalog import catalog_build, desitter_lambda
from core.errors import (
    BadParams,
    DimensionMismatch,
    NotAGraph,
    NotNull,
    OutOfDomain,
    SingularLocus,
)
from core.frame import (
    HypersurfaceMap,
    ScreenCurvatures,
    frame_at,
    local_geometry,
    nabla_derivative,
    screen_principal_curvatures,
    shape_at,
)
from core.tensor_core import SymMatrix
from tests.helpers import interior_points, midpoint

SQRT2 = np.sqrt(2.0)
H = 1e-5


class TestFrame:

    @pytest.mark.parametrize('name', ['minkowski_null_hyperplane', 'minkowski_null_cone',
                                      'desitter_distance_graph', 'cylinder_l2', 'wavy_graph'])
    def test_frame_invariants(self, name):
        hmap = catalog_build(name)
        for u in interior_points(hmap):
            fp = frame_at(hmap, u)
            for key in ('xi_null', 'n_null', 'xi_n_pairing', 'n_screen_orthogonal',
                        'xi_screen_orthogonal', 'eta_agreement'):
                assert fp.invariants[key] < 1e-10, key
            assert fp.invariants['screen_min_eigenvalue'] > 0.0

    def test_xi_spans_radical(self, cone):
        fp = frame_at(cone, midpoint(cone))
        g = fp.induced_metric.entries
        np.testing.assert_allclose(g @ fp.xi_param, 0.0, atol=1e-12)
        assert fp.xi[0] == pytest.approx(1.0 / SQRT2)

    def test_spacelike_map_is_not_null(self, spacelike_plane):
        with pytest.raises(NotNull):
            frame_at(spacelike_plane, np.zeros(3))

    def test_outside_domain(self, cone):
        with pytest.raises(OutOfDomain):
            frame_at(cone, np.array([3.0, 0.0, 0.0]))

    def test_wrong_point_shape(self, cone):
        with pytest.raises(DimensionMismatch):
            frame_at(cone, np.array([1.0, 0.0]))

    def test_cone_vertex_is_singular(self):
        cone = catalog_build('minkowski_null_cone', domain=((0.0, 2.0), (-0.5, 0.5), (-0.5, 0.5)))
        with pytest.raises(SingularLocus):
            frame_at(cone, np.zeros(3))

    def test_level_set_screen_needs_warped_ambient(self):
        hmap = HypersurfaceMap(
            name='scaled_hyperplane',
            ambient=scaled_minkowski(2),
            param=lambda u: [u[0], u[0], u[1], u[2]],
            domain=((-1.0, 1.0),) * 3,
        )
        with pytest.raises(NotAGraph):
            frame_at(hmap, np.zeros(3))
        fp = frame_at(hmap.with_options(screen_strategy='auxiliary_orthocomplement'), np.zeros(3))
        assert fp.invariants['xi_n_pairing'] < 1e-12

    def test_invalid_options(self, cone):
        with pytest.raises(BadParams):
            cone.with_options(screen_strategy='sideways')
        with pytest.raises(BadParams):
            cone.with_options(xi_scale=0.0)
        with pytest.raises(DimensionMismatch):
            cone.with_options(domain=((0.5, 2.0),))


class TestShape:

    def test_hyperplane_is_totally_geodesic(self, hyperplane):
        sd = shape_at(hyperplane, np.array([0.1, -0.3, 0.2]))
        for tensor in (sd.B, sd.C, sd.A_N, sd.A_xi_star, sd.tau):
            assert np.max(np.abs(tensor)) < 1e-12

    def test_cone_curvature(self, cone):
        for u in interior_points(cone):
            sd = shape_at(cone, u)
            np.testing.assert_allclose(sd.curvatures.values, -1.0 / (SQRT2 * u[0]), atol=1e-10)
            assert sd.curvatures.count == 1

    def test_xi_scale_rescales_curvatures(self, cone):
        u = midpoint(cone)
        base = shape_at(cone, u).curvatures.values
        scaled = shape_at(cone.with_options(xi_scale=2.0), u).curvatures.values
        np.testing.assert_allclose(scaled, 2.0 * base, atol=1e-10)

    def test_screen_choice_keeps_curvatures(self, cone):
        u = np.array([1.2, 0.2, -0.1])
        level = shape_at(cone, u).curvatures.values
        aux = shape_at(cone.with_options(screen_strategy='auxiliary_orthocomplement'), u).curvatures.values
        np.testing.assert_allclose(aux, level, atol=1e-10)

    def test_cylinder_has_two_curvatures(self, cylinder):
        u = np.array([1.4, 0.1, 0.2])
        curv = shape_at(cylinder, u).curvatures
        assert curv.count == 2
        np.testing.assert_allclose(sorted(curv.distinct), [-1.0 / (SQRT2 * 1.4), 0.0], atol=1e-10)

    @pytest.mark.parametrize('alpha', [0.3, 0.5, 0.8])
    def test_desitter_closed_form_curvature(self, alpha):
        hmap = catalog_build('desitter_distance_graph', {'alpha': alpha})
        lo, hi = hmap.domain[0]
        for t in np.linspace(lo, hi, 20):
            u = np.array([t, 0.1, -0.2])
            values = shape_at(hmap, u).curvatures.values
            np.testing.assert_allclose(values, desitter_lambda(alpha, t), atol=1e-6)

    def test_shape_residuals_small(self, desitter):
        sd = shape_at(desitter, np.array([0.2, 0.1, 0.3]))
        for name, residual in sd.residuals.items():
            assert residual < 1e-9, name


class TestCovariantDerivatives:

    def test_lambda_derivative_on_cone(self, cone):
        u = np.array([1.1, 0.2, 0.1])
        d = nabla_derivative(cone, u, 'lambda', np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(d, 1.0 / (SQRT2 * u[0] ** 2), atol=1e-9)
        screen = nabla_derivative(cone, u, 'lambda', np.array([0.0, 1.0, 0.0]))
        np.testing.assert_allclose(screen, 0.0, atol=1e-9)

    def test_lambda_derivative_matches_finite_differences(self, desitter):
        u = np.array([0.3, 0.1, -0.1])
        X = np.array([1.0, 0.5, -0.3])
        d = nabla_derivative(desitter, u, 'lambda', X)
        fd = (shape_at(desitter, u + H * X).curvatures.values
              - shape_at(desitter, u - H * X).curvatures.values) / (2.0 * H)
        np.testing.assert_allclose(d, fd, atol=1e-6)

    def test_metric_derivative(self, desitter):
        u = np.array([0.1, 0.2, 0.1])
        geometry = local_geometry(desitter, u)
        B, eta = geometry.shape.B, geometry.frame.eta
        X = np.array([0.3, -1.0, 0.7])
        lhs = nabla_derivative(desitter, u, 'g', X, geometry)
        rhs = np.outer(X @ B, eta) + np.outer(eta, X @ B)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_unknown_field(self, cone):
        with pytest.raises(BadParams):
            nabla_derivative(cone, midpoint(cone), 'riemann', np.ones(3))


class TestScreenCurvatures:

    def test_clustering(self):
        curv = ScreenCurvatures.from_values([2.0, 1.0, 1.0 + 1e-12])
        np.testing.assert_allclose(curv.distinct, [1.0, 2.0])
        assert list(curv.multiplicities) == [2, 1]

    def test_generalized_problem(self):
        g = np.array([[2.0, 0.0], [0.0, 0.5]])
        form = np.array([[4.0, 0.0], [0.0, 0.5]])
        curv = screen_principal_curvatures(form, SymMatrix(g))
        np.testing.assert_allclose(curv.values, [1.0, 2.0])
        Y = curv.screen_vectors
        np.testing.assert_allclose(Y.T @ g @ Y, np.eye(2), atol=1e-12)
