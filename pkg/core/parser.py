import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from core.catalog import ALL_CHECKS, catalog_entry, catalog_names
from core.errors import ConfigError
from core.frame import RADICAL_CONVENTIONS, SCREEN_STRATEGIES
from core.identities import DEFAULT_TOL, Tolerances

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    """One run: a catalog hypersurface, a parameter grid and the checks to evaluate"""

    hypersurface: str
    n: int = 2
    params: dict = field(default_factory=dict)
    ambient: Optional[str] = None
    screen_strategy: Optional[str] = None
    radical_convention: Optional[str] = None
    xi_scale: Optional[float] = None
    counts: tuple = (3,)
    bounds: Optional[tuple] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    checks: tuple = ()
    seed: int = 0
    ricci_flat_margin: float = 0.1
    source: Optional[str] = None

    @property
    def m(self):
        return self.n + 1

    def grid_counts(self):
        """Per-parameter counts; a single count applies to every parameter"""
        if len(self.counts) == 1:
            return tuple(self.counts) * self.m
        return tuple(self.counts)

    def to_dict(self):
        payload = asdict(self)
        payload['counts'] = list(self.grid_counts())
        payload['bounds'] = None if self.bounds is None else [list(b) for b in self.bounds]
        payload['checks'] = list(self.checks)
        return payload


class ScenarioParser:
    """Parse and validate scenario files"""

    def __init__(self):
        self.required_sections = ['ambient', 'hypersurface', 'grid']
        self.optional_sections = ['tolerances', 'checks']

    def parse_file(self, path):
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"Cannot read scenario file {path}: {e}", path=str(path))
        scenario = self.parse_text(text)
        scenario.source = str(path)
        return scenario

    def parse_text(self, text):
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Scenario is not valid TOML: {e}")
        return self.parse_scenario(raw)

    def parse_scenario(self, raw):
        """
        Build a Scenario from parsed TOML.

        Args:
            raw: dict with sections [ambient], [hypersurface], [grid],
                [tolerances], [checks]

        Returns:
            Scenario
        """

        missing = [s for s in self.required_sections if s not in raw]
        if missing:
            raise ConfigError(f"Missing required sections: {missing}", missing=missing)
        unknown = [s for s in raw if s not in self.required_sections + self.optional_sections]
        if unknown:
            raise ConfigError(f"Unknown sections: {unknown}", unknown=unknown)

        issues = self.validate_scenario(raw)
        if issues:
            raise ConfigError("Invalid scenario: " + "; ".join(issues), issues=issues)

        ambient = raw['ambient']
        surface = raw['hypersurface']
        grid = raw['grid']
        tol = dict(raw.get('tolerances', {}))
        checks = raw.get('checks', {})

        name = surface['name']
        n = int(ambient.get('dimension', 2))
        params = dict(surface.get('params', {}))
        if name == 'grw_graph' and 'name' in ambient:
            params.setdefault('ambient', ambient['name'])

        counts = grid.get('counts', 3)
        counts = (int(counts),) if isinstance(counts, int) else tuple(int(c) for c in counts)
        bounds = grid.get('bounds')
        if bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)

        enabled = checks.get('enabled')
        if enabled is None:
            enabled = catalog_entry(name).default_checks

        scenario = Scenario(
            hypersurface=name,
            n=n,
            params=params,
            ambient=ambient.get('name'),
            screen_strategy=surface.get('screen_strategy'),
            radical_convention=surface.get('radical_convention'),
            xi_scale=surface.get('xi_scale'),
            counts=counts,
            bounds=bounds,
            tolerances=Tolerances(default=float(tol.pop('default', DEFAULT_TOL)),
                                  overrides={k: float(v) for k, v in tol.items()}),
            checks=tuple(enabled),
            seed=int(checks.get('seed', 0)),
            ricci_flat_margin=float(checks.get('ricci_flat_margin', 0.1)),
        )
        logger.debug(f"✅ Parsed scenario for {name}: {len(scenario.checks)} checks, grid {scenario.grid_counts()}")
        return scenario

    def validate_scenario(self, raw):
        """Collect every problem in a parsed scenario instead of stopping at the first"""

        issues = []
        ambient = raw.get('ambient', {})
        surface = raw.get('hypersurface', {})
        grid = raw.get('grid', {})

        n = ambient.get('dimension', 2)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            issues.append(f"ambient.dimension must be an integer >= 1, got {n!r}")
            n = None

        name = surface.get('name')
        if name is None:
            issues.append("hypersurface.name is required")
        elif name not in catalog_names():
            issues.append(f"Unknown catalog entry {name!r}; known: {catalog_names()}")

        strategy = surface.get('screen_strategy')
        if strategy is not None and strategy not in SCREEN_STRATEGIES:
            issues.append(f"Unknown screen_strategy {strategy!r}")
        convention = surface.get('radical_convention')
        if convention is not None and convention not in RADICAL_CONVENTIONS:
            issues.append(f"Unknown radical_convention {convention!r}")
        xi_scale = surface.get('xi_scale')
        if xi_scale is not None and not (isinstance(xi_scale, (int, float)) and xi_scale > 0):
            issues.append(f"xi_scale must be positive, got {xi_scale!r}")
        if 'params' in surface and not isinstance(surface['params'], dict):
            issues.append("hypersurface.params must be a table")

        counts = grid.get('counts', 3)
        count_list = [counts] if isinstance(counts, int) else counts
        if not isinstance(count_list, list) or not count_list:
            issues.append(f"grid.counts must be an integer or a list of integers, got {counts!r}")
        else:
            if any(not isinstance(c, int) or isinstance(c, bool) or c < 1 for c in count_list):
                issues.append(f"grid counts must be integers >= 1, got {counts!r}")
            if n is not None and len(count_list) not in (1, n + 1):
                issues.append(f"grid.counts needs 1 or {n + 1} entries, got {len(count_list)}")

        bounds = grid.get('bounds')
        if bounds is not None:
            try:
                pairs = [(float(lo), float(hi)) for lo, hi in bounds]
            except (TypeError, ValueError):
                issues.append("grid.bounds must be a list of [min, max] pairs")
            else:
                if n is not None and len(pairs) != n + 1:
                    issues.append(f"grid.bounds needs {n + 1} pairs, got {len(pairs)}")
                if any(lo > hi for lo, hi in pairs):
                    issues.append("grid.bounds has a pair with min > max")

        for key, value in raw.get('tolerances', {}).items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                issues.append(f"Tolerance {key} must be positive, got {value!r}")

        checks = raw.get('checks', {})
        enabled = checks.get('enabled', [])
        unknown = [c for c in enabled if c not in ALL_CHECKS]
        if unknown:
            issues.append(f"Unknown checks {unknown}; known: {list(ALL_CHECKS)}")
        seed = checks.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            issues.append(f"checks.seed must be a non-negative integer, got {seed!r}")
        margin = checks.get('ricci_flat_margin', 0.1)
        if not isinstance(margin, (int, float)) or not margin > 0:
            issues.append(f"checks.ricci_flat_margin must be positive, got {margin!r}")

        return issues


def parse_tolerance_overrides(items):
    """['name=value', ...] from the command line -> {name: float}"""
    overrides = {}
    for item in items or []:
        if '=' not in item:
            raise ConfigError(f"Tolerance override must look like name=value, got {item!r}")
        name, value = item.split('=', 1)
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"Tolerance {name} is not a number: {value!r}")
        if not value > 0:
            raise ConfigError(f"Tolerance {name} must be positive, got {value}")
        overrides[name.strip()] = value
    return overrides


def apply_overrides(scenario, tolerances=None, seed=None):
    """Scenario with command-line tolerance and seed overrides applied"""
    tolerances = dict(tolerances or {})
    default = tolerances.pop('default', scenario.tolerances.default)
    merged = Tolerances(default=float(default), overrides={**scenario.tolerances.overrides, **tolerances})
    changes = {'tolerances': merged}
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"Seed must be non-negative, got {seed}")
        changes['seed'] = int(seed)
    return replace(scenario, **changes)

