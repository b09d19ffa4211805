"""Local geometry of a parameterized null hypersurface.

At a parameter point u everything is built as a 2-jet in u: tangent
vectors, the radical field xi, the screen, the transversal N. One
differentiation of those jets gives B, C, A_N, A*_xi, tau and the induced
connection as first-order jets, so their covariant derivatives and the
curvature of the induced connection come out without finite differences.

Tensors on TM are stored in the parameter coordinate basis d_0..d_n;
endomorphisms as A[c, a] = (A d_a)^c.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from core import tensor_core as tc
from core.ambient import AmbientChart, metric_at, riemann_at, riemann_from_connection
from core.errors import (
    BadParams,
    DegenerateScreen,
    DimensionMismatch,
    JetFailure,
    NotAGraph,
    NotNull,
    OutOfDomain,
    SingularLocus,
)
from core.tensor_core import (
    Dual,
    Jet2,
    SymMatrix,
    degenerate_null_direction,
    generalized_symmetric_eigen,
    jet2_compose,
    jet_block,
    jet_einsum,
    jet_inverse,
    jet_solve,
)

logger = logging.getLogger(__name__)

SCREEN_STRATEGIES = ('grw_level_set', 'auxiliary_orthocomplement')
RADICAL_CONVENTIONS = ('chart_time', 'conformal_killing')
NABLA_FIELDS = ('A_xi_star', 'A_xi_star_screen', 'A_N', 'B', 'C', 'g', 'tau', 'lambda')
CLUSTER_REL_TOL = 1e-6


@dataclass(frozen=True)
class HypersurfaceMap:
    """Parameterization (u^0..u^n) -> ambient coordinates of a null hypersurface"""

    name: str
    ambient: AmbientChart
    param: Callable
    domain: tuple
    screen_strategy: str = 'grw_level_set'
    radical_convention: str = 'chart_time'
    xi_scale: float = 1.0
    singular: Optional[Callable] = field(default=None, compare=False)
    rank_tol: float = tc.RANK_TOL
    cluster_rel_tol: float = CLUSTER_REL_TOL
    description: str = ''
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.screen_strategy not in SCREEN_STRATEGIES:
            raise BadParams(f"Unknown screen strategy: {self.screen_strategy}", known=list(SCREEN_STRATEGIES))
        if self.radical_convention not in RADICAL_CONVENTIONS:
            raise BadParams(f"Unknown radical convention: {self.radical_convention}",
                            known=list(RADICAL_CONVENTIONS))
        if len(self.domain) != self.ambient.dim - 1:
            raise DimensionMismatch(
                f"{self.name}: {len(self.domain)} parameters for an ambient of dimension {self.ambient.dim}")
        if not self.xi_scale > 0.0:
            raise BadParams(f"xi_scale must be positive, got {self.xi_scale}")

    @property
    def m(self):
        return len(self.domain)

    @property
    def n(self):
        return len(self.domain) - 1

    def with_options(self, **changes):
        return replace(self, **changes)

    def contains(self, u):
        u = np.asarray(u, dtype=float)
        return all(lo - 1e-12 <= x <= hi + 1e-12 for x, (lo, hi) in zip(u, self.domain))

    def is_singular(self, u):
        return bool(self.singular is not None and self.singular(np.asarray(u, dtype=float)))


@dataclass
class FrameJets:
    """Jets behind a FramePoint (second order unless noted)"""

    point: Jet2
    T: Jet2
    Gbar: Jet2
    gamma_bar: Jet2     # first order
    g: Jet2
    v: Jet2
    xi: Jet2
    eta_screen: Jet2
    P: Jet2
    W: Jet2
    E: Jet2
    gs: Jet2
    N: Jet2
    eta: Jet2
    Minv: Jet2          # first order


@dataclass
class FramePoint:
    """Frame of a null hypersurface at one parameter point"""

    u: np.ndarray
    p: np.ndarray
    tangent_basis: np.ndarray
    induced_metric: SymMatrix
    xi: np.ndarray
    xi_param: np.ndarray
    screen_basis: np.ndarray
    screen_param: np.ndarray
    N: np.ndarray
    eta: np.ndarray
    projector: np.ndarray
    screen_metric: np.ndarray
    ambient_metric: np.ndarray
    invariants: dict
    jets: FrameJets = field(repr=False)


@dataclass
class ScreenCurvatures:
    """Screen principal curvatures with their clustering"""

    values: np.ndarray
    labels: np.ndarray
    distinct: np.ndarray
    multiplicities: np.ndarray
    screen_vectors: np.ndarray
    vectors: Optional[np.ndarray] = None

    @property
    def count(self):
        return len(self.distinct)

    @classmethod
    def from_values(cls, values, cluster_tol=None):
        """Curvatures of A* = diag(values) w.r.t. an orthonormal screen"""
        values = np.asarray(values, dtype=float)
        k = len(values)
        return screen_principal_curvatures(np.diag(values), SymMatrix(np.eye(k)), cluster_tol=cluster_tol)


@dataclass
class ShapeJets:
    """First-order jets behind ShapeData"""

    Gamma: Jet2     # [c, a, b]: nabla_a d_b = Gamma^c_ab d_c
    B: Jet2
    C: Jet2
    A_xi_star: Jet2
    A_N: Jet2
    tau: Jet2
    Bs: Jet2
    Cs: Jet2
    nabla_P: Jet2   # [e, b, a] = (nabla_a P d_b)^e


@dataclass
class ShapeData:
    """Second fundamental forms, shape operators and tau at one point"""

    B: np.ndarray
    C: np.ndarray
    A_N: np.ndarray
    A_xi_star: np.ndarray
    tau: np.ndarray
    curvatures: ScreenCurvatures
    residuals: dict
    jets: Optional[ShapeJets] = field(default=None, repr=False)

    @property
    def lambdas(self):
        return self.curvatures


# ---------------------------------------------------------------------------
# Screen principal curvatures
# ---------------------------------------------------------------------------

def screen_principal_curvatures(screen_form, g_screen, basis=None, cluster_tol=None, rel_tol=CLUSTER_REL_TOL):
    """
    Generalized eigenproblem B v = lambda g v on the screen.

    Args:
        screen_form: B restricted to the screen basis
        g_screen: SymMatrix of g on the same basis
        basis: optional parameter-basis columns of the screen basis
        cluster_tol: absolute merge threshold, default rel_tol·(1 + max|lambda|)
    """
    form = np.asarray(screen_form, dtype=float)
    values, vectors = generalized_symmetric_eigen(SymMatrix(0.5 * (form + form.T)), g_screen)
    tol = cluster_tol if cluster_tol is not None else rel_tol * (1.0 + float(np.max(np.abs(values))))

    labels = np.zeros(len(values), dtype=int)
    for i in range(1, len(values)):
        labels[i] = labels[i - 1] + (1 if values[i] - values[i - 1] > tol else 0)
    distinct = np.array([values[labels == c].mean() for c in range(labels[-1] + 1)])
    multiplicities = np.bincount(labels)

    return ScreenCurvatures(
        values=values,
        labels=labels,
        distinct=distinct,
        multiplicities=multiplicities,
        screen_vectors=vectors,
        vectors=None if basis is None else np.asarray(basis) @ vectors,
    )


# ---------------------------------------------------------------------------
# Frame construction
# ---------------------------------------------------------------------------

def _check_point(hmap, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (hmap.m,):
        raise DimensionMismatch(f"{hmap.name} takes {hmap.m} parameters, got shape {u.shape}")
    if not hmap.contains(u):
        raise OutOfDomain(f"{hmap.name}: u = {u.tolist()} outside {hmap.domain}", u=u)
    if hmap.is_singular(u):
        raise SingularLocus(f"{hmap.name}: u = {u.tolist()} lies on the singular locus", u=u)
    return u


def _tangent_jets(hmap, u):
    """Image point and tangent vectors as 2-jets; T_a is the dual part of Phi(U + eps e_a)"""
    m, d = hmap.m, hmap.ambient.dim
    U = Jet2.variables(u)
    point, columns = None, []
    for a in range(m):
        shifted = [Dual(U[b], 1.0 if b == a else 0.0) for b in range(m)]
        image = list(hmap.param(shifted))
        if len(image) != d:
            raise DimensionMismatch(f"{hmap.name} returned {len(image)} coordinates, expected {d}")
        if point is None:
            point = jet_block([tc.real_part(c) for c in image], m)
        columns.append([tc.eps_part(c) for c in image])
    return point, jet_block(columns, m).transpose()


def _frame_jets(hmap, u):
    m, n, d = hmap.m, hmap.n, hmap.ambient.dim

    # 1) Tangent vectors and the ambient metric along the map
    point, T = _tangent_jets(hmap, u)
    p = point.value
    G = metric_at(hmap.ambient, p)
    Gbar = jet2_compose(G, point)
    dG = jet2_compose(Jet2(G.gradient, G.hessian, None), point)
    Ginv = jet_inverse(Gbar.truncate())
    lower = 0.5 * (dG.transpose(0, 2, 1) + dG - dG.transpose(2, 0, 1))
    gamma_bar = jet_einsum('ad,dbc->abc', Ginv, lower)

    # 2) Induced metric and its radical
    g = jet_einsum('ka,kb->ab', T, jet_einsum('kl,lb->kb', Gbar, T))
    try:
        v0 = degenerate_null_direction(SymMatrix(g.value), hmap.rank_tol)
    except NotNull as exc:
        raise type(exc)(f"{hmap.name} is not null at u = {u.tolist()}: {exc}", u=u) from exc

    pivot = int(np.argmax(np.abs(v0)))
    rest = [i for i in range(m) if i != pivot]
    comps = [0.0] * m
    comps[pivot] = 1.0
    if rest:
        minor = g[np.ix_(rest, rest)]
        rhs = -g[np.ix_(rest, [pivot])].reshape(len(rest))
        w = jet_solve(minor, rhs)
        for k, i in enumerate(rest):
            comps[i] = w[k]
    v = jet_block(comps, m)

    # 3) Normalize xi
    xi_raw = jet_einsum('ka,a->k', T, v)
    if abs(float(xi_raw.value[0])) < 1e-12 * max(1.0, float(np.linalg.norm(xi_raw.value))):
        raise JetFailure(f"{hmap.name}: radical direction has no time component at u = {u.tolist()}")
    kappa = hmap.xi_scale / np.sqrt(2.0)
    if hmap.radical_convention == 'conformal_killing':
        if not hmap.ambient.is_warped:
            raise NotAGraph(f"conformal_killing needs a warped ambient, {hmap.ambient.name} is not one")
        kappa = kappa / hmap.ambient.warped.rho(point[0])
    scale = kappa / xi_raw[0]
    v = v * scale
    xi = xi_raw * scale

    # 4) Screen = kernel of a covector on TM
    if hmap.screen_strategy == 'grw_level_set':
        if not hmap.ambient.is_warped:
            raise NotAGraph(f"grw_level_set needs a GRW ambient, {hmap.ambient.name} is not one")
        theta = T[0]
    else:
        theta = jet_einsum('ka,k->a', T, xi)
    theta_xi = jet_einsum('a,a->', theta, v)
    if abs(float(theta_xi.value)) < 1e-12:
        raise DegenerateScreen(f"{hmap.name}: screen covector vanishes on xi at u = {u.tolist()}")
    eta_screen = theta / theta_xi
    P = Jet2.constant(np.eye(m), m) - jet_einsum('a,b->ab', v, eta_screen)

    keep = [b for b in range(m) if b != int(np.argmax(np.abs(v.value)))]
    W = P[:, keep]
    gs = jet_einsum('ai,aj->ij', W, jet_einsum('ab,bj->aj', g, W))
    try:
        scipy.linalg.cholesky(gs.value, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateScreen(f"{hmap.name}: screen metric not positive definite at u = {u.tolist()}") from exc

    # 5) Transversal: gbar(V, E_i) = 0, gbar(V, xi) = 1, V^k = 0, then N = V - gbar(V,V)/2 xi
    E = jet_einsum('ka,ai->ki', T, W)
    k = int(np.argmax(np.abs(xi.value)))
    rows = Jet2.concatenate([
        jet_einsum('kl,li->ik', Gbar, E),
        jet_einsum('kl,l->k', Gbar, xi).reshape(1, d),
        np.eye(d)[k][None, :],
    ], axis=0)
    rhs = np.zeros(d)
    rhs[n] = 1.0
    V = jet_solve(rows, rhs)
    half = 0.5 * jet_einsum('k,k->', V, jet_einsum('kl,l->k', Gbar, V))
    N = V - xi * half
    eta = jet_einsum('ka,k->a', T, jet_einsum('kl,l->k', Gbar, N))

    M = Jet2.concatenate([T, N.reshape(d, 1)], axis=1)
    Minv = jet_inverse(M.truncate())

    return FrameJets(point=point, T=T, Gbar=Gbar, gamma_bar=gamma_bar, g=g, v=v, xi=xi,
                     eta_screen=eta_screen, P=P, W=W, E=E, gs=gs, N=N, eta=eta, Minv=Minv)


def _frame_invariants(J):
    G = J.Gbar.value
    xi, N, E = J.xi.value, J.N.value, J.E.value
    return {
        'xi_null': abs(float(xi @ G @ xi)),
        'n_null': abs(float(N @ G @ N)),
        'xi_n_pairing': abs(float(xi @ G @ N) - 1.0),
        'n_screen_orthogonal': float(np.max(np.abs(E.T @ G @ N))),
        'xi_screen_orthogonal': float(np.max(np.abs(E.T @ G @ xi))),
        'eta_agreement': float(np.max(np.abs(J.eta.value - J.eta_screen.value))),
        'screen_min_eigenvalue': float(np.min(np.linalg.eigvalsh(J.gs.value))),
    }


def frame_at(hmap, u):
    """Frame (xi, N, screen, eta) at parameter point u"""
    u = _check_point(hmap, u)
    J = _frame_jets(hmap, u)
    return FramePoint(
        u=u,
        p=J.point.value,
        tangent_basis=J.T.value,
        induced_metric=SymMatrix(J.g.value),
        xi=J.xi.value,
        xi_param=J.v.value,
        screen_basis=J.E.value,
        screen_param=J.W.value,
        N=J.N.value,
        eta=J.eta.value,
        projector=J.P.value,
        screen_metric=J.gs.value,
        ambient_metric=J.Gbar.value,
        invariants=_frame_invariants(J),
        jets=J,
    )


# ---------------------------------------------------------------------------
# Shape operators
# ---------------------------------------------------------------------------

def _relative(raw, scale):
    return float(raw) / (1.0 + float(scale))


def shape_from_frame(hmap, fp):
    """Gauss-Weingarten decomposition of the differentiated frame"""
    J = fp.jets
    m = hmap.m

    # Gauss: nabla-bar_a T_b = Gamma^c_ab T_c + B_ab N, indexed [k, b, a]
    gamma_T = jet_einsum('kij,ia->kja', J.gamma_bar, J.T)
    D = J.T.derivative() + jet_einsum('kja,jb->kba', gamma_T, J.T)
    coeff = jet_einsum('ik,kba->iba', J.Minv, D)
    Gamma = coeff[:m].transpose(0, 2, 1)
    B = coeff[m].transpose()

    # Weingarten for xi: nabla-bar_a xi = -A* d_a - tau_a xi
    nabla_xi = J.xi.derivative() + jet_einsum('kja,j->ka', gamma_T, J.xi)
    c_xi = jet_einsum('ik,ka->ia', J.Minv, nabla_xi)
    t = c_xi[:m]
    tau = -jet_einsum('c,ca->a', J.eta_screen, t)
    A_star = -jet_einsum('cd,da->ca', J.P, t)

    # Weingarten for N: nabla-bar_a N = -A_N d_a + tau_a N
    nabla_N = J.N.derivative() + jet_einsum('kja,j->ka', gamma_T, J.N)
    c_N = jet_einsum('ik,ka->ia', J.Minv, nabla_N)
    A_N = -c_N[:m]
    tau_from_N = c_N[m]

    C = jet_einsum('ca,cb->ab', A_N, jet_einsum('ce,eb->cb', J.g, J.P))

    # Screen connection of the projected coordinate fields
    nabla_P = J.P.derivative() + jet_einsum('eac,cb->eba', Gamma, J.P)
    C_direct = jet_einsum('e,eba->ab', J.eta_screen, nabla_P)
    B_direct = jet_einsum('kba,k->ab', D, jet_einsum('kl,l->k', J.Gbar, J.xi))
    B_from_A = jet_einsum('ca,cb->ab', A_star, J.g)

    Bs = jet_einsum('ai,aj->ij', J.W, jet_einsum('ab,bj->aj', B, J.W))
    Cs = jet_einsum('ai,aj->ij', J.W, jet_einsum('ab,bj->aj', C, J.W))

    curvatures = screen_principal_curvatures(Bs.value, SymMatrix(J.gs.value), basis=J.W.value,
                                             rel_tol=hmap.cluster_rel_tol)

    size = float(np.max(np.abs(B.value))) + float(np.max(np.abs(A_N.value)))
    residuals = {
        'weingarten_xi_transversal': _relative(np.max(np.abs(c_xi.value[m])), np.max(np.abs(t.value))),
        'tau_consistency': _relative(np.max(np.abs(tau.value - tau_from_N.value)), np.max(np.abs(tau.value))),
        'shape_operator_consistency': _relative(np.max(np.abs(B.value - B_from_A.value)), size),
        'screen_form_consistency': _relative(np.max(np.abs(C.value - C_direct.value)), size),
        'gauss_xi_projection': _relative(np.max(np.abs(B.value - B_direct.value)), size),
        'gauss_symmetry': _relative(np.max(np.abs(Gamma.value - Gamma.value.transpose(0, 2, 1))),
                                    np.max(np.abs(Gamma.value))),
    }

    jets = ShapeJets(Gamma=Gamma, B=B, C=C, A_xi_star=A_star, A_N=A_N, tau=tau,
                     Bs=Bs, Cs=Cs, nabla_P=nabla_P)
    return ShapeData(B=B.value, C=C.value, A_N=A_N.value, A_xi_star=A_star.value, tau=tau.value,
                     curvatures=curvatures, residuals=residuals, jets=jets)


def shape_at(hmap, u):
    """Shape data (B, C, A_N, A*_xi, tau, curvatures) at parameter point u"""
    return local_geometry(hmap, u).shape


# ---------------------------------------------------------------------------
# Everything at one point
# ---------------------------------------------------------------------------

@dataclass
class LocalGeometry:
    """Frame, shape data and curvature tensors at one parameter point"""

    map: HypersurfaceMap
    frame: FramePoint
    shape: ShapeData

    @property
    def u(self):
        return self.frame.u

    @cached_property
    def induced_riemann(self):
        """R[f, c, a, b] with R(d_a, d_b) d_c = R^f_cab d_f, from the induced connection"""
        Gamma = self.shape.jets.Gamma
        return riemann_from_connection(Gamma.value, Gamma.gradient)

    @cached_property
    def ambient_riemann(self):
        return riemann_at(self.map.ambient, self.frame.p)

    @cached_property
    def screen_riemann(self):
        """Rs[d, i, a, b] = (R*(d_a, d_b) W_i)^d for the screen fields W_i = P d_b"""
        J, S = self.frame.jets, self.shape.jets
        Gamma = S.Gamma
        nabla_W = J.W.derivative() + jet_einsum('cbe,ei->cib', Gamma, J.W)
        star = jet_einsum('dc,cib->dib', J.P, nabla_W)
        inner = star.gradient + np.einsum('cae,eib->ciba', Gamma.value, star.value)
        # outer[d, i, b, a] = (nabla*_a nabla*_b W_i)^d
        outer = np.einsum('dc,ciba->diba', J.P.value, inner)
        return outer.transpose(0, 1, 3, 2) - outer

    @cached_property
    def dtau(self):
        """2dtau(d_a, d_b) = d_a tau_b - d_b tau_a"""
        grad = self.shape.jets.tau.gradient
        return grad.T - grad

    def two_dtau_on_fields(self, X, Y):
        """X(tau(Y)) - Y(tau(X)) - tau([X, Y]) for vector-field jets X, Y"""
        tau = self.shape.jets.tau
        tau_X = jet_einsum('b,b->', tau, X)
        tau_Y = jet_einsum('b,b->', tau, Y)
        bracket = Y.gradient @ X.value - X.gradient @ Y.value
        return float(tau_Y.gradient @ X.value - tau_X.gradient @ Y.value - tau.value @ bracket)


def local_geometry(hmap, u):
    u = _check_point(hmap, u)
    fp = frame_at(hmap, u)
    sd = shape_from_frame(hmap, fp)
    logger.debug(f"{hmap.name}: geometry at u = {np.round(u, 6).tolist()}")
    return LocalGeometry(map=hmap, frame=fp, shape=sd)


# ---------------------------------------------------------------------------
# Covariant derivatives
# ---------------------------------------------------------------------------

def _covariant_form(jet, Gamma0):
    """(nabla_a T)_bc for a (0,2) tensor jet T; indexed [a, b, c]"""
    d = jet.gradient.transpose(2, 0, 1)
    return (d - np.einsum('eab,ec->abc', Gamma0, jet.value)
            - np.einsum('be,eac->abc', jet.value, Gamma0))


def _covariant_endomorphism(jet, Gamma0):
    """(nabla_a A)^c_b indexed [a, c, b]"""
    d = jet.gradient.transpose(2, 0, 1)
    return (d + np.einsum('cae,eb->acb', Gamma0, jet.value)
            - np.einsum('ce,eab->acb', jet.value, Gamma0))


def curvature_derivatives(geometry, direction):
    """Directional derivatives X(lambda_i) of the screen principal curvatures, ascending order"""
    S, J = geometry.shape.jets, geometry.frame.jets
    curv = geometry.shape.curvatures
    X = np.asarray(direction, dtype=float)
    dBs = S.Bs.gradient @ X
    dgs = J.gs.gradient @ X
    out = []
    for c, lam in enumerate(curv.distinct):
        Y = curv.screen_vectors[:, curv.labels == c]
        block = Y.T @ (dBs - lam * dgs) @ Y
        out.extend(np.linalg.eigvalsh(0.5 * (block + block.T)).tolist())
    return np.array(out)


def nabla_derivative(hmap, u, field, direction, geometry=None):
    """
    Covariant derivative of a frame field along X = direction (parameter basis).

    Fields: 'g', 'B', 'C' give (nabla_X T)(d_b, d_c); 'A_N', 'A_xi_star' give
    (nabla_X A)[c, b]; 'A_xi_star_screen' gives P(nabla_X A*); 'tau' gives
    (nabla_X tau)(d_b); 'lambda' gives X(lambda_i).
    """
    if field not in NABLA_FIELDS:
        raise BadParams(f"Unknown field: {field}", known=list(NABLA_FIELDS))
    geometry = geometry or local_geometry(hmap, u)
    S, J = geometry.shape.jets, geometry.frame.jets
    Gamma0 = S.Gamma.value
    X = np.asarray(direction, dtype=float)
    if X.shape != (hmap.m,):
        raise DimensionMismatch(f"Direction needs {hmap.m} components")

    if field == 'lambda':
        return curvature_derivatives(geometry, X)
    if field in ('g', 'B', 'C'):
        jet = {'g': J.g, 'B': S.B, 'C': S.C}[field]
        return np.einsum('a,abc->bc', X, _covariant_form(jet, Gamma0))
    if field == 'tau':
        d = S.tau.gradient.T
        return X @ (d - np.einsum('eab,e->ab', Gamma0, S.tau.value))
    jet = S.A_N if field == 'A_N' else S.A_xi_star
    out = np.einsum('a,acb->cb', X, _covariant_endomorphism(jet, Gamma0))
    if field == 'A_xi_star_screen':
        out = J.P.value @ out
    return out
