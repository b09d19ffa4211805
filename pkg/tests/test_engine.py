import numpy as np
import pytest

from core.engine import ScenarioRunner, grid_axes, run_scenario, worker_count
from core.errors import ConfigError, FrameInconsistent, NotIsoparametric, ScenarioAborted
from core.identities import measured
from core.parser import Scenario, ScenarioParser
from core.report import ReportGenerator
from tests.helpers import CONFIG_DIR


def scenario(name, counts=(2,), checks=('frame', 'basic'), **kwargs):
    return Scenario(hypersurface=name, counts=tuple(counts), checks=tuple(checks), seed=3, **kwargs)


class TestWorkers:

    def test_explicit(self):
        assert worker_count(2) == 2

    def test_environment(self, monkeypatch):
        monkeypatch.setenv('NULLGEO_THREADS', '3')
        assert worker_count() == 3

    def test_default(self, monkeypatch):
        monkeypatch.delenv('NULLGEO_THREADS', raising=False)
        assert 1 <= worker_count() <= 4

    @pytest.mark.parametrize('value', ['zero', '0', '-2'])
    def test_invalid_environment(self, monkeypatch, value):
        monkeypatch.setenv('NULLGEO_THREADS', value)
        with pytest.raises(ConfigError):
            worker_count()


class TestGrid:

    def test_axes(self):
        axes = grid_axes(((0.0, 1.0), (-1.0, 1.0)), (3, 1))
        np.testing.assert_allclose(axes[0], [0.0, 0.5, 1.0])
        np.testing.assert_allclose(axes[1], [0.0])

    def test_singular_points_are_skipped(self):
        runner = ScenarioRunner(scenario('minkowski_null_cone', counts=(3, 2, 2),
                                         bounds=((0.0, 2.0), (-0.5, 0.5), (-0.5, 0.5))), threads=1)
        report = runner.run()
        assert report.passed
        assert len(report.fitted) == 8
        assert any('singular' in note for note in report.notes)

    def test_all_points_singular(self):
        runner = ScenarioRunner(scenario('minkowski_null_cone', counts=(1, 2, 2),
                                         bounds=((0.0, 0.0), (-0.5, 0.5), (-0.5, 0.5))), threads=1)
        with pytest.raises(ConfigError):
            runner.run()

    def test_grid_axis_count(self):
        with pytest.raises(ConfigError):
            run_scenario(scenario('minkowski_null_cone', counts=(2, 2)), threads=1)


class TestRun:

    def test_hyperplane_passes(self):
        report = run_scenario(scenario('minkowski_null_hyperplane',
                                       checks=('frame', 'basic', 'space_form', 'codazzi', 'quasi_conformal')),
                              threads=1)
        assert report.verdict == 'pass'
        assert report.exit_code == 0
        assert {r['grid_index'] for r in report.records} == set(range(8))
        assert report.scenario['ambient'] == 'minkowski'

    def test_thread_count_does_not_change_the_report(self):
        s = scenario('desitter_distance_graph', checks=('frame', 'space_form', 'einstein'))
        one = ReportGenerator.to_json(run_scenario(s, threads=1))
        four = ReportGenerator.to_json(run_scenario(s, threads=4))
        assert one == four

    def test_desitter_suite(self):
        checks = ('frame', 'basic', 'space_form', 'codazzi', 'quasi_conformal', 'umbilical',
                  'einstein', 'einstein_structure', 'isoparametric', 'cartan', 'ricci_flat')
        report = run_scenario(scenario('desitter_distance_graph', checks=checks), threads=2)
        assert report.failures() == []
        grid_rows = [r for r in report.records if r['grid_index'] == -1]
        assert {'ricci_flat.nonexistence', 'isoparametric.curvature_derivative'} <= {
            r['identity_name'] for r in grid_rows}
        assert all('k' in f and 'beta' in f for f in report.fitted)

    def test_cartan_on_wavy_graph_aborts(self):
        s = scenario('wavy_graph', counts=(3,), checks=('frame', 'isoparametric', 'cartan'))
        with pytest.raises(ScenarioAborted) as info:
            run_scenario(s, threads=1)
        assert isinstance(info.value.first_error, NotIsoparametric)
        assert info.value.exit_code == 2
        assert info.value.to_dict()['cause']['error'] == 'NotIsoparametric'

    def test_isoparametric_alone_reports_failure(self):
        s = scenario('wavy_graph', counts=(3,), checks=('frame', 'isoparametric'))
        report = run_scenario(s, threads=1)
        assert report.verdict == 'fail'
        assert report.exit_code == 1

    def test_ads_ball_is_certified_negative(self):
        s = scenario('grw_graph', counts=(3,), params={'ambient': 'anti_de_sitter_ball'},
                     checks=('frame', 'space_form', 'codazzi', 'quasi_conformal'))
        runner = ScenarioRunner(s, threads=1)
        assert runner.build_map().ambient.curvature_tag == -1.0
        report = runner.run()
        assert report.failures() == []
        matches = {f['grw_match'] for f in report.fitted}
        assert 'sqrt2_rho_prime_over_rho' in matches
        assert 'neither' not in matches

    def test_flat_slicing_is_certified_positive(self):
        s = scenario('grw_graph', params={'ambient': 'de_sitter_flat_slicing', 'profile': 'plane'},
                     checks=('frame', 'space_form', 'quasi_conformal'))
        runner = ScenarioRunner(s, threads=1)
        assert runner.build_map().ambient.curvature_tag == 1.0
        report = runner.run()
        assert report.passed
        assert any('sqrt(2)' in note for note in report.notes)
        assert {f['grw_match'] for f in report.fitted} == {'sqrt2_rho_prime_over_rho'}

    def test_failing_frame_aborts_before_any_identity(self, monkeypatch):
        broken = measured('frame.xi_null', (), 1.0, 0.0)
        monkeypatch.setattr('core.engine.check_frame_consistency', lambda geometry, tol: [broken])
        with pytest.raises(ScenarioAborted) as info:
            run_scenario(scenario('minkowski_null_hyperplane', checks=('frame', 'space_form')), threads=1)
        assert isinstance(info.value.first_error, FrameInconsistent)
        assert info.value.exit_code == 2
        assert info.value.to_dict()['cause']['error'] == 'FrameInconsistent'

    def test_ambient_mismatch(self):
        with pytest.raises(ConfigError):
            ScenarioRunner(scenario('minkowski_null_cone', ambient='de_sitter'), threads=1).build_map()

    def test_sampled_tangents_record(self):
        report = run_scenario(scenario('minkowski_null_cone', checks=('space_form',)), threads=1)
        names = {r['identity_name'] for r in report.records}
        assert 'space_form.sampled_tangents' in names


class TestConfigScenarios:

    @pytest.mark.parametrize('path', [p for p in sorted(CONFIG_DIR.glob('*.toml')) if p.stem != 'wavy_graph_cartan'],
                             ids=lambda p: p.stem)
    def test_shipped_scenarios_pass(self, path):
        report = run_scenario(ScenarioParser().parse_file(path), threads=2)
        assert report.failures() == []
        assert report.exit_code == 0
        assert len(report.fitted) >= 50

    def test_negative_control_config_aborts(self):
        s = ScenarioParser().parse_file(CONFIG_DIR / 'wavy_graph_cartan.toml')
        with pytest.raises(ScenarioAborted) as info:
            run_scenario(s, threads=1)
        assert info.value.exit_code == 2

    def test_cylinder_config(self):
        s = ScenarioParser().parse_file(CONFIG_DIR / 'cylinder_l2.toml')
        report = run_scenario(s, threads=2)
        assert report.failures() == []
        by_name = {}
        for row in report.records:
            by_name.setdefault(row['identity_name'], []).append(row)
        assert 'einstein.split_single' in by_name
        assert all(row['vacuous'] for row in by_name['einstein.split_single'])
        assert not any(row['vacuous'] for row in by_name['cartan.conformal'])
        assert max(row['residual'] for row in by_name['cartan.conformal']) < 1e-7
        assert not any(row['vacuous'] for row in by_name['codazzi.mixed_derivative'])
        assert not any(row['vacuous'] for row in by_name['leaf.curvature'])

    def test_identical_runs_give_identical_bytes(self):
        path = CONFIG_DIR / 'desitter_distance_graph.toml'
        first = ReportGenerator.to_json(run_scenario(ScenarioParser().parse_file(path), threads=2))
        second = ReportGenerator.to_json(run_scenario(ScenarioParser().parse_file(path), threads=2))
        assert first == second

    @pytest.mark.parametrize('alpha', [0.2, 0.4, 0.6, 0.8, 0.95])
    def test_desitter_family_stays_away_from_ricci_flat(self, alpha):
        s = scenario('desitter_distance_graph', counts=(4,), params={'alpha': alpha},
                     checks=('frame', 'einstein', 'ricci_flat'))
        report = run_scenario(s, threads=2)
        assert report.failures() == []
        assert min(abs(f['k']) for f in report.fitted) > 1.0
        row = next(r for r in report.records if r['identity_name'] == 'ricci_flat.nonexistence')
        assert not row['vacuous']
        assert row['detail']['min_abs_k'] > row['detail']['margin']

