import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from core.ambient import certify_curvature, space_form_residual
from core.catalog import catalog_build
from core.errors import ConfigError, FrameInconsistent, NullGeometryError, ScenarioAborted
from core.frame import local_geometry
from core.identities import (
    certified_curvature,
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
    fit_quasi_conformal,
    measured,
    quasi_conformal_records,
    ricci_and_einstein,
    ricci_records,
)
from core.report import Report

logger = logging.getLogger(__name__)

# checks that need the curvature constant of the ambient
CURVATURE_CHECKS = ('space_form', 'codazzi', 'einstein', 'einstein_structure', 'cartan', 'ricci_flat')
FIT_CHECKS = ('quasi_conformal', 'umbilical', 'einstein_structure', 'cartan')
EINSTEIN_CHECKS = ('einstein', 'einstein_structure', 'ricci_flat')
GRID_CHECKS = ('isoparametric', 'cartan', 'ricci_flat')


def worker_count(threads=None):
    """Explicit count, else NULLGEO_THREADS, else min(4, cpu count)"""
    if threads is None:
        env = os.environ.get('NULLGEO_THREADS')
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"NULLGEO_THREADS must be an integer, got {env!r}")
        else:
            threads = min(4, os.cpu_count() or 1)
    if threads < 1:
        raise ConfigError(f"Worker count must be >= 1, got {threads}")
    return int(threads)


def grid_axes(domain, counts):
    """Evenly spaced samples per parameter; a count of 1 takes the midpoint"""
    axes = []
    for (lo, hi), count in zip(domain, counts):
        if count == 1:
            axes.append(np.array([0.5 * (lo + hi)]))
        else:
            axes.append(np.linspace(lo, hi, count))
    return axes


@dataclass
class PointResult:
    """Everything evaluated at one grid point"""

    index: int
    u: np.ndarray
    records: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    geometry: Optional[object] = field(default=None, repr=False)
    qc_fit: Optional[object] = field(default=None, repr=False)
    einstein: Optional[object] = field(default=None, repr=False)
    error: Optional[Exception] = None


class ScenarioRunner:
    """Evaluate the enabled checks of a scenario over its parameter grid"""

    def __init__(self, scenario, threads=None):
        self.scenario = scenario
        self.threads = worker_count(threads)
        self.checks = tuple(scenario.checks)
        self.tolerances = scenario.tolerances
        self.notes = []

    # -- setup --------------------------------------------------------------

    def build_map(self):
        s = self.scenario
        hmap = catalog_build(s.hypersurface, s.params, n=s.n, screen_strategy=s.screen_strategy,
                             radical_convention=s.radical_convention, xi_scale=s.xi_scale, domain=s.bounds)
        if s.ambient is not None and s.ambient != hmap.ambient.name:
            raise ConfigError(f"{s.hypersurface} lives in {hmap.ambient.name}, scenario names {s.ambient}",
                              expected=hmap.ambient.name, given=s.ambient)
        if hmap.ambient.curvature_tag is None and any(c in CURVATURE_CHECKS for c in self.checks):
            rng = np.random.default_rng(s.seed)
            hmap = hmap.with_options(ambient=certify_curvature(hmap.ambient, rng))
        return hmap

    def grid_points(self, hmap):
        """Grid-ordered regular points; singular ones are dropped"""
        counts = self.scenario.grid_counts()
        if len(counts) != hmap.m:
            raise ConfigError(f"Grid has {len(counts)} axes, {hmap.name} has {hmap.m} parameters")
        points, skipped = [], 0
        for p in itertools.product(*grid_axes(hmap.domain, counts)):
            u = np.array(p, dtype=float)
            if hmap.is_singular(u):
                skipped += 1
                continue
            points.append(u)
        if skipped:
            logger.warning(f"⚠️ Skipped {skipped} grid points on the singular locus of {hmap.name}")
            self.notes.append(f"{skipped} grid points on the singular locus were skipped")
        if not points:
            raise ConfigError(f"Every grid point of {hmap.name} lies on its singular locus")
        return points

    # -- per point ------------------------------------------------------------

    def evaluate_point(self, hmap, index, u):
        result = PointResult(index=index, u=u)
        try:
            self._evaluate(hmap, result)
        except Exception as e:
            logger.error(f"❌ Grid point {index} (u = {np.round(u, 6).tolist()}): {type(e).__name__}: {e}")
            result.error = e
        return result

    def _evaluate(self, hmap, result):
        u, checks, tol = result.u, self.checks, self.tolerances
        rng = np.random.default_rng(self.scenario.seed + result.index)
        geometry = local_geometry(hmap, u)
        fp, sd = geometry.frame, geometry.shape
        result.geometry = geometry
        records = result.records

        records += check_frame_consistency(geometry, tol)
        broken = [r.identity_name for r in records if not r.passed]
        if broken:
            raise FrameInconsistent(f"Frame checks fail before any identity runs: {broken}", u=u, failed=broken)
        curv = sd.curvatures
        result.fitted = {'point': u.tolist(), 'lambdas': curv.values.tolist(), 'distinct': int(curv.count)}

        c_bar = certified_curvature(hmap) if any(c in CURVATURE_CHECKS for c in checks) else None

        if 'basic' in checks:
            records += check_basic_properties(sd, fp, tol)
        if 'space_form' in checks:
            records += check_constant_curvature_identities(hmap, u, tol, geometry)
            # random tangent triples drawn from the per-point stream
            x, y, z = (fp.tangent_basis @ rng.standard_normal((hmap.m, 3))).T
            residual = space_form_residual(geometry.ambient_riemann, fp.ambient_metric, c_bar, x, y, z)
            records.append(measured('space_form.sampled_tangents', u, residual, 0.0, tol))
        if 'codazzi' in checks:
            records += check_codazzi_lemma(hmap, u, tol, geometry)
            records += check_eigendistributions(hmap, u, tol, geometry)

        if any(c in FIT_CHECKS for c in checks):
            fit = fit_quasi_conformal(sd, fp, tol, hmap.ambient)
            result.qc_fit = fit
            result.fitted.update({'phi': fit.phi, 'psi': fit.psi, 'psi_unit': fit.psi_unit})
            if fit.grw_match is not None:
                result.fitted['grw_match'] = fit.grw_match
            if 'quasi_conformal' in checks:
                records += quasi_conformal_records(fit, sd, fp, tol)
        if 'umbilical' in checks:
            record = check_umbilical(sd, fp, result.qc_fit, tol)
            result.fitted['beta'] = record.detail['beta']
            records.append(record)

        if any(c in EINSTEIN_CHECKS for c in checks):
            ric, einstein = ricci_and_einstein(sd, fp, c_bar, hmap.n, tol)
            result.einstein = einstein
            result.fitted['k'] = einstein.k
            if 'einstein' in checks:
                records += ricci_records(geometry, ric, einstein, tol)
            if 'einstein_structure' in checks:
                records += check_einstein_structure(curv, result.qc_fit, c_bar, einstein.k, hmap.n, tol,
                                                    einstein=einstein, point=u)

    # -- whole grid -------------------------------------------------------------

    def _abort_on_errors(self, results):
        failed = [r for r in results if r.error is not None]
        if not failed:
            return
        first = failed[0]
        raise ScenarioAborted(
            f"{len(failed)} of {len(results)} grid points failed; first at index {first.index}",
            first_error=first.error,
            index=first.index,
            point=first.u,
            failed_points=len(failed),
        )

    def _grid_checks(self, hmap, results):
        """Checks over the whole grid: isoparametric, Cartan, Ricci-flat non-existence"""
        tol, checks = self.tolerances, self.checks
        records = []
        geometries = [r.geometry for r in results]

        iso = None
        if 'isoparametric' in checks or 'cartan' in checks:
            iso = check_isoparametric(hmap, geometries, tol)
            if 'isoparametric' in checks:
                records += iso

        if 'cartan' in checks:
            c_bar = certified_curvature(hmap)
            for r in results:
                try:
                    r.records += check_cartan(r.geometry.shape, r.qc_fit, c_bar, tol, point=r.u, precondition=iso)
                except NullGeometryError as e:
                    logger.error(f"❌ Cartan check at grid point {r.index}: {e}")
                    r.error = e
                    self._abort_on_errors(results)

        if 'ricci_flat' in checks:
            c_bar = certified_curvature(hmap)
            records.append(check_ricci_flat_desitter(
                [r.einstein.k for r in results], c_bar, [r.geometry.shape.curvatures.count for r in results],
                margin=self.scenario.ricci_flat_margin, tolerances=tol))
        return records

    def _grw_notes(self, results):
        matches = sorted({r.fitted.get('grw_match') for r in results} - {None})
        if 'sqrt2_rho_prime_over_rho' in matches:
            note = "GRW quasi-conformal psi matches sqrt(2) rho'/rho, not rho'/rho, in the chart-time gauge"
            logger.warning(f"⚠️ {note}")
            self.notes.append(note)
        elif 'neither' in matches:
            note = "GRW quasi-conformal psi matches neither rho'/rho nor sqrt(2) rho'/rho at some points"
            logger.warning(f"⚠️ {note}")
            self.notes.append(note)

    def run(self):
        """
        Run the scenario.

        Returns:
            Report with records in grid order followed by grid-level records

        Raises:
            ScenarioAborted: a grid point or a grid-level precondition failed
        """
        s = self.scenario
        hmap = self.build_map()
        points = self.grid_points(hmap)
        logger.info(f"Evaluating {len(points)} points of {hmap.name} with {self.threads} workers")

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = list(pool.map(lambda item: self.evaluate_point(hmap, *item), enumerate(points)))
        self._abort_on_errors(results)

        grid_records = self._grid_checks(hmap, results)
        self._grw_notes(results)

        vacuous = sorted({rec.identity_name for r in results for rec in r.records if rec.vacuous})
        if vacuous:
            self.notes.append("vacuous checks: " + ", ".join(vacuous))

        rows = []
        for r in results:
            for record in r.records:
                rows.append({**record.to_dict(), 'grid_index': r.index})
        for record in grid_records:
            rows.append({**record.to_dict(), 'grid_index': -1})

        scenario = s.to_dict()
        scenario['ambient'] = hmap.ambient.name
        scenario['domain'] = [list(b) for b in hmap.domain]
        scenario['screen_strategy'] = hmap.screen_strategy
        scenario['radical_convention'] = hmap.radical_convention
        scenario['xi_scale'] = hmap.xi_scale
        report = Report(scenario=scenario, records=rows, fitted=[r.fitted for r in results], notes=self.notes)

        if report.passed:
            logger.info(f"✅ {hmap.name}: all {len(rows)} records pass")
        else:
            logger.warning(f"⚠️ {hmap.name}: {len(report.failures())} of {len(rows)} records fail")
        return report


def run_scenario(scenario, threads=None):
    """Evaluate a Scenario and return its Report"""
    return ScenarioRunner(scenario, threads=threads).run()
