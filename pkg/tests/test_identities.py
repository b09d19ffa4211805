from dataclasses import replace

import numpy as np
import pytest

from core.ambient import certify_curvature
from core.catalog import catalog_build
from core.errors import NotEinstein, NotIsoparametric, UncertifiedCurvature
from core.frame import ScreenCurvatures, curvature_derivatives, local_geometry
from core.identities import (
    EIGEN_NAMES,
    EinsteinFit,
    QuasiConformalFit,
    ResidualRecord,
    Tolerances,
    cartan_conformal_sums,
    cartan_sums,
    check_basic_properties,
    check_cartan,
    check_codazzi_lemma,
    check_constant_curvature_identities,
    check_eigendistributions,
    check_einstein_structure,
    check_frame_consistency,
    check_isoparametric,
    check_ricci_flat_desitter,
    check_umbilical,
    compare,
    curvature_jets,
    fit_quasi_conformal,
    grw_relation_match,
    quasi_conformal_records,
    ricci_and_einstein,
    ricci_records,
)
from tests.helpers import interior_points, midpoint

SQRT2 = np.sqrt(2.0)


def failures(records):
    return [(r.identity_name, r.residual) for r in records if not r.passed]


def geometries(hmap, count=3):
    return [local_geometry(hmap, u) for u in interior_points(hmap, count)]


class TestRecords:

    def test_relative_residual(self):
        record = compare('demo', None, [2.0], [1.0])
        assert record.residual == pytest.approx(1.0 / 3.0)
        assert record.scale == 2.0
        assert not record.passed

    def test_tolerance_overrides(self):
        tol = Tolerances(default=1e-7, overrides={'space_form': 1e-4, 'space_form.dtau': 1e-2})
        assert tol.get('space_form.dtau') == 1e-2
        assert tol.get('space_form.codazzi_b') == 1e-4
        assert tol.get('codazzi.cyclic') == 1e-7

    def test_to_dict_flattens_point(self):
        row = compare('demo', np.array([0.5, 1.0]), 1.0, 1.0).to_dict()
        assert row['point'] == [0.5, 1.0]
        assert row['passed'] is True


class TestPointwise:

    @pytest.mark.parametrize('name', ['hyperplane', 'cone', 'desitter', 'cylinder', 'wavy', 'grw_point'])
    def test_frame_and_basic_properties(self, name, request):
        hmap = request.getfixturevalue(name)
        for geometry in geometries(hmap):
            assert failures(check_frame_consistency(geometry)) == []
            assert failures(check_basic_properties(geometry.shape, geometry.frame)) == []

    @pytest.mark.parametrize('name', ['hyperplane', 'cone', 'desitter', 'cylinder', 'cylinder_n3', 'grw_point'])
    def test_space_form_identities(self, name, request):
        hmap = request.getfixturevalue(name)
        for u in interior_points(hmap):
            assert failures(check_constant_curvature_identities(hmap, u)) == []

    @pytest.mark.parametrize('name', ['cone', 'desitter', 'cylinder_n3', 'grw_point'])
    def test_screen_gauss_across_the_domain(self, name, request):
        hmap = request.getfixturevalue(name)
        for u in interior_points(hmap, count=8):
            records = check_constant_curvature_identities(hmap, u)
            screen = next(r for r in records if r.identity_name == 'gauss_codazzi.screen')
            assert screen.passed, (u, screen.residual)
            assert screen.scale > 0.0

    @pytest.mark.parametrize('n', [2, 3])
    @pytest.mark.parametrize('name', ['minkowski_null_hyperplane', 'minkowski_null_cone', 'desitter_distance_graph',
                                      'cylinder_l2'])
    def test_gauss_codazzi_set_in_both_dimensions(self, name, n):
        hmap = catalog_build(name, {}, n=n)
        records = check_constant_curvature_identities(hmap, midpoint(hmap))
        gauss = [r for r in records if r.identity_name.startswith('gauss_codazzi.')]
        assert len(gauss) == 4
        assert all(r.residual < 1e-6 for r in gauss), failures(gauss)

    @pytest.mark.parametrize('name', ['cone', 'desitter', 'cylinder'])
    def test_codazzi_lemma(self, name, request):
        hmap = request.getfixturevalue(name)
        records = check_codazzi_lemma(hmap, midpoint(hmap))
        assert records[0].identity_name == 'codazzi.tau_screen'
        assert {'codazzi.radical_exchange_projected', 'codazzi.radical_cyclic'} <= {r.identity_name for r in records}
        assert failures(records) == []
        assert not any(r.vacuous for r in records)

    def test_flat_slicing_needs_certification(self, flat_slicing, rng):
        u = midpoint(flat_slicing)
        with pytest.raises(UncertifiedCurvature):
            check_constant_curvature_identities(flat_slicing, u)
        ambient = certify_curvature(flat_slicing.ambient, rng)
        assert ambient.curvature_tag == 1.0
        certified = flat_slicing.with_options(ambient=ambient)
        assert failures(check_constant_curvature_identities(certified, u)) == []

    def test_ads_ball_is_a_negative_space_form(self, ads_ball, rng):
        ambient = certify_curvature(ads_ball.ambient, rng)
        assert ambient.curvature_tag == -1.0
        certified = ads_ball.with_options(ambient=ambient)
        for u in interior_points(certified):
            assert failures(check_constant_curvature_identities(certified, u)) == []
            assert failures(check_codazzi_lemma(certified, u)) == []


class TestEigendistributions:

    def test_cone_leaf_is_a_round_sphere(self, cone):
        u = midpoint(cone)
        records = check_eigendistributions(cone, u)
        leaf = records[0]
        assert leaf.identity_name == 'leaf.curvature'
        assert leaf.passed and not leaf.vacuous
        # the screen leaf through (r, r phi) is a sphere of radius r
        assert leaf.detail['sectional'] == [pytest.approx(1.0 / u[0] ** 2, rel=1e-6)]
        assert all(r.vacuous for r in records[1:])

    def test_cylinder_eigendistributions(self, cylinder):
        for u in interior_points(cylinder):
            records = check_eigendistributions(cylinder, u)
            names = {r.identity_name for r in records}
            assert set(EIGEN_NAMES) <= names
            assert failures(records) == []
            assert not any(r.vacuous for r in records if r.identity_name in EIGEN_NAMES)
            mixed = next(r for r in records if r.identity_name == 'codazzi.mixed_derivative')
            assert mixed.detail['distinct'] == 2

    def test_flat_factor_of_the_cylinder_is_a_flat_leaf(self, cylinder_n3):
        records = check_eigendistributions(cylinder_n3, np.array([1.3, 0.2, -0.1, 0.3]))
        leaf = records[0]
        assert not leaf.vacuous
        assert leaf.detail['sectional'] == [pytest.approx(0.0, abs=1e-9)]
        assert failures(records) == []

    def test_spherical_factor_of_the_cylinder(self):
        hmap = catalog_build('cylinder_l2', {'k': 2}, n=3)
        u = np.array([1.6, 0.1, -0.2, 0.3])
        records = check_eigendistributions(hmap, u)
        assert records[0].detail['sectional'] == [pytest.approx(1.0 / 1.6 ** 2, rel=1e-6)]
        assert failures(records) == []

    def test_simple_curvatures_give_a_vacuous_leaf(self, cylinder):
        leaf = check_eigendistributions(cylinder, midpoint(cylinder))[0]
        assert leaf.vacuous
        assert leaf.detail['reason'] == 'every screen principal curvature is simple'

    def test_curvature_jets_match_directional_derivatives(self, wavy):
        geometry = local_geometry(wavy, midpoint(wavy))
        sd, fp = geometry.shape, geometry.frame
        direction = np.array([0.3, -0.5, 0.8])
        jets = curvature_jets(sd, fp)
        np.testing.assert_allclose([j.gradient @ direction for j in jets],
                                   curvature_derivatives(geometry, direction), atol=1e-9)



class TestQuasiConformal:

    def test_cone_fit_is_degenerate(self, cone):
        geometry = local_geometry(cone, midpoint(cone))
        fit = fit_quasi_conformal(geometry.shape, geometry.frame)
        assert fit.degenerate
        assert fit.phi == 0.0
        assert fit.accepted
        records = quasi_conformal_records(fit, geometry.shape, geometry.frame)
        assert failures(records) == []

    def test_transversal_shape_on_radical_breaks_the_fit(self, cone):
        geometry = local_geometry(cone, midpoint(cone))
        sd, fp = geometry.shape, geometry.frame
        corrupted = replace(sd, A_N=sd.A_N + np.outer(fp.screen_param[:, 0], fp.eta))
        assert not fit_quasi_conformal(corrupted, fp).accepted
        bad = replace(sd, A_N=sd.A_N + np.outer(fp.xi_param, fp.eta))
        assert not check_basic_properties(bad, fp)[0].passed

    def test_minkowski_graph_matches_both_relations(self, grw_point):
        geometry = local_geometry(grw_point, midpoint(grw_point))
        fit = fit_quasi_conformal(geometry.shape, geometry.frame, ambient=grw_point.ambient)
        assert fit.grw_match == 'both'

    @pytest.mark.parametrize('name', ['flat_slicing', 'ads_ball'])
    def test_warped_graphs_match_chart_time_gauge(self, name, request):
        hmap = request.getfixturevalue(name)
        for u in interior_points(hmap)[1:]:
            geometry = local_geometry(hmap, u)
            fit = fit_quasi_conformal(geometry.shape, geometry.frame, ambient=hmap.ambient)
            hubble = hmap.ambient.warped.hubble(geometry.frame.p[0])
            assert abs(hubble) > 1e-3
            assert fit.grw_match == 'sqrt2_rho_prime_over_rho'
            assert fit.psi_unit == pytest.approx(SQRT2 * hubble, rel=1e-6)


    @pytest.mark.parametrize('psi_unit, hubble, expected', [
        (0.0, 0.0, 'both'),
        (1.0, 1.0, 'rho_prime_over_rho'),
        (SQRT2 * 0.4, 0.4, 'sqrt2_rho_prime_over_rho'),
        (3.0, 1.0, 'neither'),
    ])
    def test_grw_relation_match(self, psi_unit, hubble, expected):
        assert grw_relation_match(psi_unit, hubble) == expected

    def test_umbilical(self, cone, cylinder):
        geometry = local_geometry(cone, midpoint(cone))
        record = check_umbilical(geometry.shape, geometry.frame)
        assert record.passed
        assert record.detail['beta'] == pytest.approx(geometry.shape.curvatures.values[0])

        geometry = local_geometry(cylinder, np.array([1.4, 0.1, 0.2]))
        assert not check_umbilical(geometry.shape, geometry.frame).passed


class TestEinstein:

    def test_desitter_is_einstein_and_not_ricci_flat(self, desitter):
        ks, counts = [], []
        for geometry in geometries(desitter):
            sd, fp = geometry.shape, geometry.frame
            ric, einstein = ricci_and_einstein(sd, fp, 1.0, desitter.n)
            assert failures(ricci_records(geometry, ric, einstein)) == []
            fit = fit_quasi_conformal(sd, fp, ambient=desitter.ambient)
            records = check_einstein_structure(sd.curvatures, fit, 1.0, einstein.k, desitter.n,
                                               einstein=einstein, point=fp.u)
            assert failures(records) == []
            ks.append(einstein.k)
            counts.append(sd.curvatures.count)
        assert min(abs(k) for k in ks) > 0.1
        assert check_ricci_flat_desitter(ks, 1.0, counts).passed

    def test_not_einstein(self):
        curvatures = ScreenCurvatures.from_values([1.0, 1.0])
        fit = QuasiConformalFit(phi=0.0, psi=0.0, residual=0.0)
        with pytest.raises(NotEinstein):
            check_einstein_structure(curvatures, fit, 0.0, 0.0, 2,
                                     einstein=EinsteinFit(k=0.0, residual=1.0, symmetry_residual=0.0))

    def test_rejected_pair(self):
        curvatures = ScreenCurvatures.from_values([1.0, 1.0])
        fit = QuasiConformalFit(phi=0.0, psi=0.0, residual=1.0)
        with pytest.raises(NotEinstein):
            check_einstein_structure(curvatures, fit, 0.0, 0.0, 2)

    def test_two_roots(self):
        # x^2 - 3x + 2 has roots 1 and 2; with psi = 0 the sum is tr A*
        curvatures = ScreenCurvatures.from_values([1.0, 2.0])
        fit = QuasiConformalFit(phi=1.0, psi=0.0, residual=0.0)
        records = check_einstein_structure(curvatures, fit, 0.0, 2.0, 2)
        names = {r.identity_name for r in records}
        assert {'einstein.quadratic', 'einstein.root_sum', 'einstein.root_product'} <= names
        assert failures(records) == []

    def test_wrong_constant_fails(self):
        curvatures = ScreenCurvatures.from_values([1.0, 2.0])
        fit = QuasiConformalFit(phi=1.0, psi=0.0, residual=0.0)
        records = check_einstein_structure(curvatures, fit, 0.0, 5.0, 2)
        assert 'einstein.quadratic' in dict(failures(records))

    def test_three_curvatures_fail(self):
        curvatures = ScreenCurvatures.from_values([1.0, 2.0, 3.0])
        fit = QuasiConformalFit(phi=1.0, psi=0.0, residual=0.0)
        records = check_einstein_structure(curvatures, fit, 0.0, 2.0, 3)
        assert 'einstein.curvature_count' in dict(failures(records))

    def test_split_with_zero_psi_is_vacuous(self):
        # cylinder over S^1 x R^2: Ricci-flat with phi = 1, psi = 0
        lam = -1.0 / SQRT2
        curvatures = ScreenCurvatures.from_values([lam, 0.0, 0.0])
        fit = QuasiConformalFit(phi=1.0, psi=0.0, residual=0.0)
        records = {r.identity_name: r for r in check_einstein_structure(curvatures, fit, 0.0, 0.0, 3)}
        assert records['einstein.split_single'].vacuous
        assert records['einstein.split_single'].detail['reason'] == 'psi = 0'
        assert records['einstein.split_multiple'].passed
        assert failures(records.values()) == []

    def test_zero_pair_is_vacuous(self):
        curvatures = ScreenCurvatures.from_values([0.3, 0.3])
        fit = QuasiConformalFit(phi=0.0, psi=0.0, residual=0.0)
        records = {r.identity_name: r for r in check_einstein_structure(curvatures, fit, 0.0, 0.0, 2)}
        assert records['einstein.phi_zero_single_curvature'].vacuous

    def test_representative_pair_leaves_single_root_vacuous(self, cone):
        geometry = local_geometry(cone, midpoint(cone))
        sd, fp = geometry.shape, geometry.frame
        _, einstein = ricci_and_einstein(sd, fp, 0.0, cone.n)
        fit = fit_quasi_conformal(sd, fp)
        assert fit.degenerate
        records = {r.identity_name: r for r in check_einstein_structure(sd.curvatures, fit, 0.0, einstein.k, cone.n,
                                                                        einstein=einstein, point=fp.u)}
        assert records['einstein.single_root'].vacuous
        assert records['einstein.single_root'].detail['reason'] == 'representative pair of a degenerate fit'
        assert not records['einstein.discriminant'].vacuous
        assert records['einstein.quadratic'].detail['representative_pair']
        assert failures(records.values()) == []


    def test_ricci_flat_margin(self):
        assert not check_ricci_flat_desitter([0.05, 0.2], 1.0, [1, 1]).passed
        assert check_ricci_flat_desitter([0.0], 0.0, [1]).vacuous
        assert check_ricci_flat_desitter([0.5], 1.0, [2]).vacuous


class TestCartan:

    def test_cartan_sums(self):
        sums, scales = cartan_sums([1.0, 2.0], [0, 1], 1.0, [0.0, 0.0])
        np.testing.assert_allclose(sums, [-1.0, 1.0])
        np.testing.assert_allclose(scales, [1.0, 1.0])

    def test_same_cluster_is_skipped(self):
        sums, _ = cartan_sums([1.0, 1.0, 2.0], [0, 0, 1], 0.0, [1.0, 1.0, 1.0])
        # (0 + 1 + 2) / (1 - 2) for the first two, twice (0 + 2 + 1) / (2 - 1) for the last
        np.testing.assert_allclose(sums, [-3.0, -3.0, 6.0])

    def test_conformal_sums(self):
        sums, _ = cartan_conformal_sums([1.0, 2.0], [2, 1], 1.0, 0.5, 0.0)
        np.testing.assert_allclose(sums, [-3.0, 6.0])

    def test_needs_isoparametric(self):
        failed = ResidualRecord('isoparametric.curvature_derivative', (), 1.0, 0.0, 1e-7, False)
        with pytest.raises(NotIsoparametric):
            check_cartan(None, None, 0.0, precondition=[failed])

    def test_cylinder(self, cylinder):
        iso = check_isoparametric(cylinder, geometries(cylinder))
        assert failures(iso) == []
        geometry = local_geometry(cylinder, np.array([1.4, 0.1, 0.2]))
        fit = fit_quasi_conformal(geometry.shape, geometry.frame)
        records = check_cartan(geometry.shape, fit, 0.0, point=geometry.frame.u, precondition=iso)
        names = {r.identity_name for r in records}
        assert {'cartan.sum', 'cartan.curvature_count', 'cartan.zero_curvature'} <= names
        assert failures(records) == []
        conformal = next(r for r in records if r.identity_name == 'cartan.conformal')
        assert not conformal.vacuous
        assert conformal.residual < 1e-7

    def test_single_curvature_is_vacuous(self, cone):
        geometry = local_geometry(cone, midpoint(cone))
        records = check_cartan(geometry.shape, None, 0.0)
        assert all(r.vacuous for r in records if r.identity_name.startswith('cartan.sum'))


class TestIsoparametric:

    def test_cone_is_isoparametric(self, cone):
        records = check_isoparametric(cone, geometries(cone))
        assert len(records) == 4
        assert failures(records) == []

    def test_wavy_graph_is_not(self, wavy):
        records = check_isoparametric(wavy, geometries(wavy, count=4))
        assert 'isoparametric.curvature_derivative' in dict(failures(records))

    def test_empty_grid(self, cone):
        assert all(r.vacuous for r in check_isoparametric(cone, []))
