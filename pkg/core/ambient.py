"""Lorentzian ambient charts: metrics with 2-jets, Christoffels, Riemann.

Every built-in chart is a GRW warped product -I x_rho F with chart time as
coordinate 0 and a conformally flat fiber F (Euclidean, stereographic
sphere or Poincare ball).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from core import tensor_core as tc
from core.errors import (
    BadParams,
    InvalidWarping,
    OutOfDomain,
    SingularMetric,
    UncertifiedCurvature,
)
from core.tensor_core import Jet2, SymMatrix

logger = logging.getLogger(__name__)

SPACE_FORM_TOL = 1e-7
CURVATURE_CANDIDATES = (-1.0, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Fibers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberChart:
    """Riemannian fiber with metric sigma(y)·delta in one chart"""

    name: str
    dim: int
    conformal_factor: Callable
    # fiber coordinates must satisfy |y| < radius
    radius: float = np.inf

    def contains(self, y):
        return float(np.linalg.norm(np.asarray(y, dtype=float))) < self.radius


def _squared_norm(y):
    total = 0.0
    for c in y:
        total = total + c * c
    return total


def euclidean_fiber(dim):
    return FiberChart('euclidean', dim, lambda y: 1.0)


def sphere_fiber(dim, pole_margin=50.0):
    """Unit sphere in stereographic coordinates projected from the south pole"""
    return FiberChart('sphere', dim, lambda y: 4.0 / (1.0 + _squared_norm(y)) ** 2, radius=pole_margin)


def hyperbolic_fiber(dim):
    """Hyperbolic space in Poincare-ball coordinates"""
    return FiberChart('hyperbolic', dim, lambda y: 4.0 / (1.0 - _squared_norm(y)) ** 2, radius=1.0)


def sphere_from_stereographic(y):
    """Embed stereographic coordinates as a point of the unit sphere"""
    q = _squared_norm(y)
    denom = 1.0 + q
    return [2.0 * c / denom for c in y] + [(1.0 - q) / denom]


def stereographic_from_sphere(p):
    """Inverse of sphere_from_stereographic (p off the south pole)"""
    denom = 1.0 + p[-1]
    return [c / denom for c in p[:-1]]


FIBERS = {
    'euclidean': euclidean_fiber,
    'sphere': sphere_fiber,
    'hyperbolic': hyperbolic_fiber,
}


# ---------------------------------------------------------------------------
# Warped products
# ---------------------------------------------------------------------------

WARPINGS = {
    # name: (rho, rho', default interval)
    'one': (lambda t: 1.0, lambda t: 0.0, (-np.inf, np.inf)),
    'cosh': (tc.cosh, tc.sinh, (-np.inf, np.inf)),
    'exp': (tc.exp, tc.exp, (-np.inf, np.inf)),
    'cos': (tc.cos, lambda t: -tc.sin(t), (-1.5, 1.5)),
}

# (warping, fiber) pairs with a known constant curvature
KNOWN_SPACE_FORMS = {
    ('one', 'euclidean'): 0.0,
    ('cosh', 'sphere'): 1.0,
}


@dataclass(frozen=True)
class WarpedProductSpec:
    """-I x_rho F with rho > 0 on I"""

    warping: str
    fiber: FiberChart
    interval: Optional[tuple] = None

    def __post_init__(self):
        if self.warping not in WARPINGS:
            raise BadParams(f"Unknown warping: {self.warping}", known=sorted(WARPINGS))
        if self.interval is None:
            object.__setattr__(self, 'interval', WARPINGS[self.warping][2])

    def rho(self, t):
        return WARPINGS[self.warping][0](t)

    def rho_prime(self, t):
        return WARPINGS[self.warping][1](t)

    def hubble(self, t):
        """rho'/rho as a float"""
        t = float(t)
        return float(tc.value_of(self.rho_prime(t))) / float(tc.value_of(self.rho(t)))


@dataclass(frozen=True)
class AmbientChart:
    """A Lorentzian manifold in one coordinate chart"""

    name: str
    dim: int
    metric_fn: Callable
    curvature_tag: Optional[float] = None
    signature_index: int = 1
    warped: Optional[WarpedProductSpec] = None
    domain_fn: Optional[Callable] = field(default=None, compare=False)
    # box used when sampling random points for certification
    sample_box: tuple = field(default=(), compare=False)

    @property
    def is_warped(self):
        return self.warped is not None

    def check_domain(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise OutOfDomain(f"Expected {self.dim} coordinates, got shape {p.shape}", chart=self.name)
        if not np.all(np.isfinite(p)):
            raise OutOfDomain("Non-finite coordinates", chart=self.name, point=p)
        if self.domain_fn is not None:
            reason = self.domain_fn(p)
            if reason:
                raise OutOfDomain(f"Point outside chart {self.name}: {reason}", chart=self.name, point=p)

    def metric_entries(self, coords):
        """Metric components at generic coordinates (floats, duals or jets)"""
        return self.metric_fn(list(coords))


def grw_chart(spec, name=None):
    """Build the chart of -I x_rho F"""
    lo, hi = spec.interval
    lo_s = max(lo, -5.0)
    hi_s = min(hi, 5.0)
    ts = np.linspace(lo_s, hi_s, 257)
    rho = np.array([float(tc.value_of(spec.rho(t))) for t in ts])
    if np.any(rho <= 0.0):
        bad = float(ts[np.argmax(rho <= 0.0)])
        raise InvalidWarping(f"Warping {spec.warping} is not positive on {spec.interval} (t = {bad:.4f})")

    fiber = spec.fiber
    dim = fiber.dim + 1

    def metric_fn(x):
        t, y = x[0], x[1:]
        r = spec.rho(t)
        w = r * r * fiber.conformal_factor(y)
        rows = [[0.0] * dim for _ in range(dim)]
        rows[0][0] = -1.0
        for i in range(1, dim):
            rows[i][i] = w
        return rows

    def domain_fn(p):
        if not (lo <= p[0] <= hi):
            return f"t = {p[0]:.4f} outside {spec.interval}"
        if not fiber.contains(p[1:]):
            return f"fiber point outside |y| < {fiber.radius}"
        return None

    box = [(max(lo, -1.0), min(hi, 1.0))] + [(-0.5, 0.5)] * fiber.dim
    tag = KNOWN_SPACE_FORMS.get((spec.warping, fiber.name))
    return AmbientChart(
        name=name or f"grw_{spec.warping}_{fiber.name}",
        dim=dim,
        metric_fn=metric_fn,
        curvature_tag=tag,
        signature_index=1,
        warped=spec,
        domain_fn=domain_fn,
        sample_box=tuple(box),
    )


# ---------------------------------------------------------------------------
# Named charts
# ---------------------------------------------------------------------------

def minkowski(n):
    return grw_chart(WarpedProductSpec('one', euclidean_fiber(n + 1)), name='minkowski')


def de_sitter(n):
    return grw_chart(WarpedProductSpec('cosh', sphere_fiber(n + 1)), name='de_sitter')


def de_sitter_flat_slicing(n):
    """rho = e^t over a flat fiber: the expanding half of de Sitter space, certified by sampling"""
    return grw_chart(WarpedProductSpec('exp', euclidean_fiber(n + 1)), name='de_sitter_flat_slicing')


def anti_de_sitter_ball(n):
    """rho = cos t over the Poincare ball, curvature -1"""
    return grw_chart(WarpedProductSpec('cos', hyperbolic_fiber(n + 1)), name='anti_de_sitter_ball')


def scaled_minkowski(n, scale=2.0):
    """c·eta with constant c > 0, a flat chart that is not a warped product"""
    if scale <= 0.0:
        raise BadParams(f"Scale must be positive, got {scale}")
    dim = n + 2

    def metric_fn(x):
        rows = [[0.0] * dim for _ in range(dim)]
        rows[0][0] = -scale
        for i in range(1, dim):
            rows[i][i] = scale
        return rows

    return AmbientChart(name='scaled_minkowski', dim=dim, metric_fn=metric_fn, curvature_tag=0.0,
                        sample_box=tuple([(-1.0, 1.0)] * dim))


CHARTS = {
    'minkowski': minkowski,
    'de_sitter': de_sitter,
    'de_sitter_flat_slicing': de_sitter_flat_slicing,
    'anti_de_sitter_ball': anti_de_sitter_ball,
    'scaled_minkowski': scaled_minkowski,
}


def chart_by_name(name, n):
    if name not in CHARTS:
        raise BadParams(f"Unknown ambient chart: {name}", known=sorted(CHARTS))
    return CHARTS[name](n)


# ---------------------------------------------------------------------------
# Metric, connection and curvature
# ---------------------------------------------------------------------------

def metric_at(chart, p):
    """
    Metric at p with its coordinate 2-jet.

    Returns:
        Jet2 of shape (d, d); gradient[a, b, c] = d_c g_ab and
        hessian[a, b, c, e] = d_e d_c g_ab
    """
    chart.check_domain(p)
    coords = Jet2.variables(p)
    jet = tc.jet_block(chart.metric_entries(coords), len(coords))

    g = SymMatrix(jet.value).entries
    eig = np.linalg.eigvalsh(g)
    scale = max(1.0, float(np.max(np.abs(eig))))
    if np.min(np.abs(eig)) < 1e-12 * scale:
        raise SingularMetric(f"Metric of {chart.name} is degenerate", point=np.asarray(p))
    index = int(np.sum(eig < 0.0))
    if index != chart.signature_index:
        raise SingularMetric(f"Metric index {index} differs from {chart.signature_index}",
                             point=np.asarray(p))
    return jet


def _inverse_metric(g0):
    cond = np.linalg.cond(g0)
    if not np.isfinite(cond) or cond > tc.SINGULAR_COND:
        raise SingularMetric(f"Metric is not invertible (cond {cond:.3e})")
    return np.linalg.inv(g0)


def christoffel_symbols(g0, g1):
    """Gamma[a, b, c] = Gamma^a_bc from the metric and its first derivatives"""
    ginv = _inverse_metric(g0)
    lower = 0.5 * (np.einsum('dcb->dbc', g1) + g1 - np.einsum('bcd->dbc', g1))
    return np.einsum('ad,dbc->abc', ginv, lower)


def christoffel_derivatives(g0, g1, g2):
    """dGamma[a, b, c, e] = d_e Gamma^a_bc"""
    ginv = _inverse_metric(g0)
    lower = 0.5 * (np.einsum('dcb->dbc', g1) + g1 - np.einsum('bcd->dbc', g1))
    dlower = 0.5 * (np.einsum('dcbe->dbce', g2) + g2 - np.einsum('bcde->dbce', g2))
    dginv = -np.einsum('af,fhe,hd->ade', ginv, g1, ginv)
    return np.einsum('ade,dbc->abce', dginv, lower) + np.einsum('ad,dbce->abce', ginv, dlower)


def riemann_from_connection(gamma, dgamma):
    """
    R[a, b, c, d] = R^a_bcd with R(d_c, d_d) d_b = R^a_bcd d_a, for a
    torsion-free connection with symbols gamma[a, b, c] (nabla_b d_c =
    gamma^a_bc d_a) and derivatives dgamma[a, b, c, e].
    """
    return (np.einsum('adbc->abcd', dgamma)
            - np.einsum('acbd->abcd', dgamma)
            + np.einsum('ace,edb->abcd', gamma, gamma)
            - np.einsum('ade,ecb->abcd', gamma, gamma))


def christoffels_at(chart, p):
    jet = metric_at(chart, p)
    return christoffel_symbols(jet.value, jet.gradient)


def riemann_at(chart, p):
    jet = metric_at(chart, p)
    gamma = christoffel_symbols(jet.value, jet.gradient)
    dgamma = christoffel_derivatives(jet.value, jet.gradient, jet.hessian)
    return riemann_from_connection(gamma, dgamma)


def apply_riemann(riemann, x, y, z):
    """R(X, Y)Z as a vector"""
    return np.einsum('abcd,b,c,d->a', riemann, z, x, y)


def space_form_residual(riemann, g, c_bar, x, y, z):
    """Relative residual of R(X,Y)Z = c(g(Y,Z)X - g(X,Z)Y)"""
    lhs = apply_riemann(riemann, x, y, z)
    rhs = c_bar * ((y @ g @ z) * x - (x @ g @ z) * y)
    return float(np.linalg.norm(lhs - rhs)) / (1.0 + float(np.linalg.norm(riemann)))


def sample_points(chart, rng, count):
    box = np.asarray(chart.sample_box, dtype=float)
    if box.shape != (chart.dim, 2):
        raise BadParams(f"Chart {chart.name} has no sampling box")
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, chart.dim))


def max_space_form_residual(chart, c_bar, rng, count=100):
    worst = 0.0
    for p in sample_points(chart, rng, count):
        jet = metric_at(chart, p)
        riemann = riemann_at(chart, p)
        x, y, z = rng.standard_normal((3, chart.dim))
        worst = max(worst, space_form_residual(riemann, jet.value, c_bar, x, y, z))
    return worst


def certify_curvature(chart, rng, count=100, tol=SPACE_FORM_TOL, candidates=CURVATURE_CANDIDATES):
    """
    Return the chart with curvature_tag set to the candidate that passes the
    space-form residual at every sampled point.
    """
    if chart.curvature_tag is not None:
        candidates = (chart.curvature_tag,)
    points = sample_points(chart, rng, count)
    vectors = rng.standard_normal((count, 3, chart.dim))
    riemanns = [(riemann_at(chart, p), metric_at(chart, p).value) for p in points]

    for c_bar in candidates:
        worst = max(space_form_residual(r, g, c_bar, *v) for (r, g), v in zip(riemanns, vectors))
        if worst < tol:
            logger.info(f"✅ {chart.name}: space form with c = {c_bar:g} (max residual {worst:.2e})")
            return replace(chart, curvature_tag=float(c_bar))

    raise UncertifiedCurvature(f"{chart.name} is not a space form with curvature in {list(candidates)}")
