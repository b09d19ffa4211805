"""Built-in null hypersurfaces.

Every parameterization takes a list of generic scalars (floats, duals over
jets) and returns ambient chart coordinates, so the frame pipeline can
differentiate it exactly.
"""

import itertools
import logging
from dataclasses import dataclass, field
from tokenize import TokenError
from typing import Callable

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr

from core import tensor_core as tc
from core.ambient import anti_de_sitter_ball, de_sitter, de_sitter_flat_slicing, minkowski
from core.errors import BadParams, EikonalViolated, NullGeometryError
from core.frame import HypersurfaceMap
from core.tensor_core import ELEMENTARY_FUNCTIONS, Jet2

logger = logging.getLogger(__name__)

ALL_CHECKS = (
    'frame', 'basic', 'space_form', 'codazzi', 'quasi_conformal', 'umbilical',
    'einstein', 'einstein_structure', 'isoparametric', 'cartan', 'ricci_flat',
)
GRAPH_CHECKS = ('frame', 'basic', 'space_form', 'codazzi', 'quasi_conformal')
EIKONAL_TOL = 1e-8
FLAT_SLICING_OFFSET = 3.0
SINGULAR_RADIUS = 1e-6
DESITTER_SINGULAR = 1e-3
# sympy function classes the compiled profile can evaluate
SUPPORTED_FUNCTIONS = (set(ELEMENTARY_FUNCTIONS) - {'pi', 'e'}) | {'Abs'}
GRAPH_PROFILES = ('plane', 'point', 'line', 'torus', 'horosphere', 'expression')
GRAPH_AMBIENTS = {
    'minkowski': minkowski,
    'de_sitter_flat_slicing': de_sitter_flat_slicing,
    'anti_de_sitter_ball': anti_de_sitter_ball,
}


def gnomonic(u):
    """Unit vector (u, 1)/sqrt(1 + |u|^2) on the sphere of dimension len(u)"""
    total = 1.0
    for c in u:
        total = total + c * c
    scale = 1.0 / tc.sqrt(total)
    return [c * scale for c in u] + [scale]


def _squared(values):
    total = 0.0
    for c in values:
        total = total + c * c
    return total


def _norm(values):
    return tc.sqrt(_squared(values))


def _box(*intervals):
    return tuple((float(lo), float(hi)) for lo, hi in intervals)


def _as_float(params, key, default):
    try:
        return float(params.get(key, default))
    except (TypeError, ValueError):
        raise BadParams(f"Parameter {key} must be a number, got {params.get(key)!r}")


def _domain(params, default):
    """Domain override from params, checked against the parameter count"""
    domain = params.get('domain')
    if domain is None:
        return default
    domain = tuple(tuple(float(x) for x in pair) for pair in domain)
    if len(domain) != len(default) or any(len(pair) != 2 or pair[0] > pair[1] for pair in domain):
        raise BadParams(f"Domain must be {len(default)} intervals (lo, hi) with lo <= hi", domain=list(domain))
    return domain


# ---------------------------------------------------------------------------
# Minkowski examples
# ---------------------------------------------------------------------------

def minkowski_null_hyperplane(n=2, params=None):
    """t = x^0 in L^{n+2}"""
    params = params or {}
    m = n + 1

    def param(u):
        return [u[0], u[0]] + list(u[1:])

    return HypersurfaceMap(
        name='minkowski_null_hyperplane',
        ambient=minkowski(n),
        param=param,
        domain=_domain(params, _box(*[(-1.0, 1.0)] * m)),
        description='Null hyperplane t = x^0; totally geodesic, A_N = 0',
        params=dict(params),
    )


def minkowski_null_cone(n=2, params=None):
    """Future light cone of the origin, (r, r·phi(u))"""
    params = params or {}

    def param(u):
        r = u[0]
        return [r] + [r * c for c in gnomonic(u[1:])]

    return HypersurfaceMap(
        name='minkowski_null_cone',
        ambient=minkowski(n),
        param=param,
        domain=_domain(params, _box((0.5, 2.0), *[(-0.5, 0.5)] * n)),
        singular=lambda u: abs(u[0]) < SINGULAR_RADIUS,
        description='Light cone of the origin; totally umbilical screen, vertex excluded',
        params=dict(params),
    )


def cylinder_l2(n=2, params=None):
    """(r, r·phi_k(u), z): cone over S^k times a flat R^(n-k), two screen curvatures"""
    params = params or {}
    k = int(params.get('k', 1))
    if not 1 <= k <= n - 1:
        raise BadParams(f"cylinder_l2 needs 1 <= k <= n - 1, got k = {k} with n = {n}", k=k, n=n)

    def param(u):
        r = u[0]
        return [r] + [r * c for c in gnomonic(u[1:k + 1])] + list(u[k + 1:])

    return HypersurfaceMap(
        name='cylinder_l2',
        ambient=minkowski(n),
        param=param,
        domain=_domain(params, _box((0.5, 2.0), *[(-0.5, 0.5)] * n)),
        singular=lambda u: abs(u[0]) < SINGULAR_RADIUS,
        description=f'Cone over S^{k} times R^{n - k}; screen curvatures -1/(sqrt2 r) (x{k}) and 0 (x{n - k})',
        params={**params, 'k': k},
    )


# ---------------------------------------------------------------------------
# GRW graphs t = f(x)
# ---------------------------------------------------------------------------

def _distance_profile(center, skip_last=False):
    def profile(x):
        coords = x[:-1] if skip_last else x
        return _norm([c - center[i] for i, c in enumerate(coords)])
    return profile


def _torus_profile(radius):
    def profile(x):
        ring = tc.sqrt(x[0] * x[0] + x[1] * x[1]) - radius
        return _norm([ring] + list(x[2:]))
    return profile


def _horosphere_profile(x):
    """Busemann function of the Poincare ball toward the boundary point e_0"""
    toward = [x[0] - 1.0] + list(x[1:])
    return tc.log(_squared(toward) / (1.0 - _squared(x)))


def expression_profile(expression, m):
    """Compile a sympy expression in x0..x{m-1} into a generic-scalar profile"""
    symbols = sympy.symbols(f'x0:{m}')
    local = {str(s): s for s in symbols}
    try:
        expr = parse_expr(str(expression), local_dict=local)
    except (sympy.SympifyError, SyntaxError, TypeError, NameError, TokenError) as e:
        raise BadParams(f"Cannot parse profile expression {expression!r}: {e}")
    unknown = sorted(str(s) for s in expr.free_symbols if s not in symbols)
    if unknown:
        raise BadParams(f"Profile expression uses unknown symbols {unknown}", allowed=[str(s) for s in symbols])
    functions = sorted({type(f).__name__ for f in expr.atoms(sympy.Function)} - SUPPORTED_FUNCTIONS)
    if functions:
        raise BadParams(f"Profile expression uses unsupported functions {functions}",
                        allowed=sorted(SUPPORTED_FUNCTIONS))
    compiled = sympy.lambdify(symbols, expr, modules=[ELEMENTARY_FUNCTIONS])

    def profile(x):
        return compiled(*x)

    return profile


def _default_center(m):
    return [-2.0] + [0.0] * (m - 1)


def graph_profile(profile, m, params):
    """Distance-like function h with |grad h| = 1 for the named profile"""
    if profile == 'plane':
        return lambda x: x[0]
    if profile == 'point':
        center = [float(c) for c in params.get('center', _default_center(m))]
        if len(center) != m:
            raise BadParams(f"Point profile center needs {m} coordinates", center=center)
        return _distance_profile(center)
    if profile == 'line':
        if m < 2:
            raise BadParams("Line profile needs at least two parameters")
        center = [float(c) for c in params.get('center', _default_center(m - 1))]
        if len(center) != m - 1:
            raise BadParams(f"Line profile center needs {m - 1} coordinates", center=center)
        return _distance_profile(center, skip_last=True)
    if profile == 'torus':
        if m < 2:
            raise BadParams("Torus profile needs at least two parameters")
        return _torus_profile(_as_float(params, 'radius', 1.0))
    if profile == 'horosphere':
        return _horosphere_profile
    if profile == 'expression':
        if 'expression' not in params:
            raise BadParams("Expression profile needs an 'expression' parameter")
        return expression_profile(params['expression'], m)
    raise BadParams(f"Unknown graph profile: {profile}", known=list(GRAPH_PROFILES))


def _graph_height(ambient_name, h, offset):
    """Height f over the fiber for the warping of the ambient"""
    if ambient_name == 'minkowski':
        return h
    if ambient_name == 'de_sitter_flat_slicing':
        # rho = e^t: |grad f| = e^f for f = -log(offset - h)
        return lambda x: -tc.log(offset - h(x))
    if ambient_name == 'anti_de_sitter_ball':
        # rho = cos t: f = atan(sinh h) has f' = 1/cosh h = cos f
        return lambda x: tc.arctan(tc.sinh(h(x)))
    raise BadParams(f"grw_graph has no ambient {ambient_name}", known=list(GRAPH_AMBIENTS))


def _sample_grid(domain, per_axis=3):
    axes = [np.linspace(lo, hi, per_axis) if hi > lo else np.array([lo]) for lo, hi in domain]
    return [np.array(p) for p in itertools.product(*axes)]


def validate_eikonal(ambient, height, domain, tol=EIKONAL_TOL, per_axis=3):
    """
    Check |grad f|_F = rho(f) at sample points of the domain.

    Returns the worst relative deviation; raises EikonalViolated above tol.
    """
    spec = ambient.warped
    worst, worst_x = 0.0, None
    for x in _sample_grid(domain, per_axis):
        try:
            f = height(Jet2.variables(x))
            if not isinstance(f, Jet2):
                f = Jet2.constant(float(f), len(x))
        except (FloatingPointError, ZeroDivisionError, NullGeometryError) as e:
            raise EikonalViolated(f"Graph height is undefined at x = {x.tolist()}: {e}", x=x)
        value, grad = float(f.value), np.asarray(f.gradient, dtype=float)
        sigma = float(tc.value_of(spec.fiber.conformal_factor(list(x))))
        lhs = np.sqrt(grad @ grad / sigma)
        rho = float(tc.value_of(spec.rho(value)))
        if not (np.isfinite(lhs) and np.isfinite(rho)):
            raise EikonalViolated(f"Graph height is not finite at x = {x.tolist()}", x=x)
        deviation = abs(lhs - rho) / max(abs(rho), 1.0)
        if deviation > worst:
            worst, worst_x = deviation, x
    if worst > tol:
        raise EikonalViolated(
            f"|grad f| differs from rho(f) by {worst:.3e} (tolerance {tol:.1e})",
            x=worst_x, deviation=worst, tolerance=tol)
    logger.debug(f"✅ Eikonal condition holds to {worst:.2e} on {ambient.name}")
    return worst


def grw_graph(n=2, params=None):
    """Null graph t = f(x) over the fiber with |grad f|_F = rho(f)"""
    params = params or {}
    m = n + 1
    ambient_name = params.get('ambient', 'minkowski')
    if ambient_name not in GRAPH_AMBIENTS:
        raise BadParams(f"grw_graph has no ambient {ambient_name}", known=list(GRAPH_AMBIENTS))
    ambient = GRAPH_AMBIENTS[ambient_name](n)
    profile_name = params.get('profile') or ('horosphere' if ambient_name == 'anti_de_sitter_ball' else 'plane')

    if profile_name == 'torus':
        default = _box((1.3, 1.7), (-0.3, 0.3), *[(0.2, 0.6)] * (m - 2))
    elif ambient_name == 'anti_de_sitter_ball':
        default = _box(*[(-0.4, 0.4)] * m)
    else:
        default = _box(*[(-0.5, 0.5)] * m)
    domain = _domain(params, default)

    h = graph_profile(profile_name, m, params)
    height = _graph_height(ambient_name, h, _as_float(params, 'offset', FLAT_SLICING_OFFSET))
    validate_eikonal(ambient, height, domain, tol=_as_float(params, 'eikonal_tol', EIKONAL_TOL))

    def param(x):
        return [height(list(x))] + list(x)

    return HypersurfaceMap(
        name='grw_graph',
        ambient=ambient,
        param=param,
        domain=domain,
        description=f'Null graph t = f(x), {profile_name} profile over {ambient_name}',
        params={**params, 'ambient': ambient_name, 'profile': profile_name},
    )


def wavy_graph(n=2, params=None):
    """Torus-profile graph in Minkowski; tube level sets, screen curvatures vary along the leaves"""
    if n < 2:
        raise BadParams(f"wavy_graph needs n >= 2, got {n}")
    params = dict(params or {})
    params.setdefault('domain', _box((1.3, 1.7), (-0.3, 0.3), *[(0.2, 0.6)] * (n - 1)))
    hmap = grw_graph(n, {**params, 'ambient': 'minkowski', 'profile': 'torus'})
    return hmap.with_options(
        name='wavy_graph',
        description='Null graph over the distance to a circle; not isoparametric',
    )


# ---------------------------------------------------------------------------
# de Sitter
# ---------------------------------------------------------------------------

def desitter_lambda(alpha, t):
    """Closed-form screen curvature of the distance graph in the conformal Killing gauge"""
    return -alpha / (np.sqrt(2.0) * (alpha * np.sinh(t) - np.sqrt(1.0 - alpha * alpha)))


def desitter_distance_graph(n=2, params=None):
    """
    Null hypersurface of de Sitter space at constant distance from a point.

    On the hyperquadric the point is (s, R(s)phi(u), sqrt(1-a^2)s + a) with
    s = sinh t; in the chart it is (t, stereographic(omega)). The screen has a
    single curvature desitter_lambda(a, t).
    """
    params = params or {}
    alpha = _as_float(params, 'alpha', 0.5)
    if not 0.0 < alpha < 1.0:
        raise BadParams(f"alpha must lie in (0, 1), got {alpha}", alpha=alpha)
    beta = np.sqrt(1.0 - alpha * alpha)
    t_star = float(np.arcsinh(beta / alpha))

    def param(u):
        t = u[0]
        s, c = tc.sinh(t), tc.cosh(t)
        radius = alpha * s - beta
        omega = [radius * x / c for x in gnomonic(u[1:])] + [(beta * s + alpha) / c]
        denom = 1.0 + omega[-1]
        return [t] + [w / denom for w in omega[:-1]]

    def singular(u):
        return abs(alpha * np.sinh(u[0]) - beta) < DESITTER_SINGULAR

    return HypersurfaceMap(
        name='desitter_distance_graph',
        ambient=de_sitter(n),
        param=param,
        domain=_domain(params, _box((-1.0, t_star - 0.2), *[(-0.5, 0.5)] * n)),
        radical_convention='conformal_killing',
        singular=singular,
        description=f'Distance graph in de Sitter, alpha = {alpha}; single screen curvature',
        params={**params, 'alpha': alpha},
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable
    description: str
    defaults: dict = field(default_factory=dict)
    default_checks: tuple = ALL_CHECKS


CATALOG = {
    entry.name: entry for entry in (
        CatalogEntry('minkowski_null_hyperplane', minkowski_null_hyperplane,
                     'Null hyperplane t = x^0 in Minkowski space'),
        CatalogEntry('minkowski_null_cone', minkowski_null_cone,
                     'Light cone of the origin in Minkowski space'),
        CatalogEntry('grw_graph', grw_graph,
                     'Null graph t = f(x) in a GRW chart (Minkowski, flat-sliced de Sitter or the AdS ball)',
                     defaults={'ambient': 'minkowski', 'offset': FLAT_SLICING_OFFSET},
                     default_checks=GRAPH_CHECKS),
        CatalogEntry('desitter_distance_graph', desitter_distance_graph,
                     'Constant-distance null hypersurface in de Sitter space',
                     defaults={'alpha': 0.5}),
        CatalogEntry('cylinder_l2', cylinder_l2,
                     'Cone over a sphere times a flat factor, two screen curvatures',
                     defaults={'k': 1},
                     default_checks=tuple(c for c in ALL_CHECKS if c not in ('umbilical', 'ricci_flat'))),
        CatalogEntry('wavy_graph', wavy_graph,
                     'Non-isoparametric torus-profile graph in Minkowski space',
                     default_checks=GRAPH_CHECKS),
    )
}


def catalog_names():
    return sorted(CATALOG)


def catalog_entry(name):
    if name not in CATALOG:
        raise BadParams(f"Unknown catalog entry: {name}", known=catalog_names())
    return CATALOG[name]


def catalog_build(name, params=None, n=2, screen_strategy=None, radical_convention=None,
                  xi_scale=None, domain=None):
    """
    Build a catalog hypersurface.

    Args:
        name: catalog entry name
        params: entry parameters (merged over the entry defaults)
        n: screen dimension, the ambient has dimension n + 2
        screen_strategy, radical_convention, xi_scale: frame options
        domain: parameter box overriding the entry default

    Returns:
        HypersurfaceMap
    """
    entry = catalog_entry(name)
    if int(n) < 1:
        raise BadParams(f"Screen dimension must be >= 1, got {n}")
    merged = {**entry.defaults, **(params or {})}
    if domain is not None:
        merged['domain'] = domain
    hmap = entry.builder(int(n), merged)

    options = {}
    if screen_strategy is not None:
        options['screen_strategy'] = screen_strategy
    if radical_convention is not None:
        options['radical_convention'] = radical_convention
    if xi_scale is not None:
        options['xi_scale'] = float(xi_scale)
    if options:
        hmap = hmap.with_options(**options)
    logger.info(f"✅ Built {hmap.name} (n = {hmap.n}) on {hmap.ambient.name}")
    return hmap


def describe(name):
    """Human-readable summary of an entry"""
    entry = catalog_entry(name)
    lines = [f"{entry.name}: {entry.description}"]
    if entry.defaults:
        lines.append("  defaults: " + ", ".join(f"{k}={v}" for k, v in sorted(entry.defaults.items())))
    lines.append("  checks: " + ", ".join(entry.default_checks))
    doc = (entry.builder.__doc__ or '').strip()
    if doc:
        lines.append("  " + doc.splitlines()[0])
    return "\n".join(lines)
