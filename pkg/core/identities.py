"""Residual checkers for the identities satisfied by null hypersurfaces.

Every checker returns ``ResidualRecord`` rows. Residuals are relative: the
largest entry of |lhs - rhs| divided by 1 + the largest entry of either side.
Identities that hold for every tangent argument are compared as full tensors
in the parameter basis; identities stated on the screen are compared on the
screen basis.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from core.errors import NotEinstein, NotIsoparametric, UncertifiedCurvature
from core.frame import curvature_derivatives, local_geometry
from core.tensor_core import Jet2, jet_einsum, jet_inverse

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
# |lambda| below this is treated as zero when a relation divides by it
ZERO_CURVATURE = 1e-12
DEGENERATE_FIT = 1e-10
SQRT2 = float(np.sqrt(2.0))


@dataclass
class ResidualRecord:
    """One identity evaluated at one point"""

    identity_name: str
    point: tuple
    residual: float
    scale: float
    tolerance: float
    passed: bool
    vacuous: bool = False
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        row = asdict(self)
        row['point'] = [float(x) for x in self.point]
        return row


@dataclass
class Tolerances:
    """Per-identity tolerances; an override may name one identity or its group (text before the first '.')"""

    default: float = DEFAULT_TOL
    overrides: dict = field(default_factory=dict)

    def get(self, name):
        if name in self.overrides:
            return float(self.overrides[name])
        group = name.split('.', 1)[0]
        return float(self.overrides.get(group, self.default))


def _tols(tolerances):
    return tolerances if tolerances is not None else Tolerances()


def _size(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(x))) if x.size else 0.0


def _point(u):
    return tuple(float(x) for x in np.atleast_1d(u)) if u is not None else ()


def compare(name, u, lhs, rhs, tolerances=None, detail=None):
    """Record for lhs = rhs"""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = max(_size(lhs), _size(rhs))
    return measured(name, u, _size(lhs - rhs), scale, tolerances, detail)


def measured(name, u, raw, scale, tolerances=None, detail=None):
    """Record for an already computed raw residual"""
    tol = _tols(tolerances).get(name)
    residual = float(abs(raw)) / (1.0 + float(scale))
    return ResidualRecord(identity_name=name, point=_point(u), residual=residual, scale=float(scale),
                          tolerance=tol, passed=bool(residual <= tol), detail=dict(detail or {}))


def vacuous(name, u, tolerances=None, reason=''):
    return ResidualRecord(identity_name=name, point=_point(u), residual=0.0, scale=0.0,
                          tolerance=_tols(tolerances).get(name), passed=True, vacuous=True,
                          detail={'reason': reason} if reason else {})


def certified_curvature(hmap):
    """c of a certified space-form ambient"""
    tag = hmap.ambient.curvature_tag
    if tag is None:
        raise UncertifiedCurvature(f"{hmap.ambient.name} has no certified constant curvature",
                                   chart=hmap.ambient.name)
    return float(tag)


# ---------------------------------------------------------------------------
# Pointwise tensors
# ---------------------------------------------------------------------------

class PointTensors:
    """Plain arrays of one LocalGeometry in the parameter basis"""

    def __init__(self, geometry):
        fp, sd = geometry.frame, geometry.shape
        J, S = fp.jets, sd.jets
        self.geometry = geometry
        self.u = fp.u
        self.m = geometry.map.m
        self.n = geometry.map.n
        self.g = J.g.value
        self.B = sd.B
        self.C = sd.C
        self.AN = sd.A_N
        self.As = sd.A_xi_star
        self.tau = sd.tau
        self.eta = J.eta.value
        self.deta = J.eta.gradient
        self.P = J.P.value
        self.v = J.v.value
        self.W = J.W.value
        self.Gamma = S.Gamma.value
        self.nabla_P = S.nabla_P.value

    @property
    def nabla_B(self):
        """(nabla_a B)(d_b, d_c) as [a, b, c]"""
        jet = self.geometry.shape.jets.B
        return (jet.gradient.transpose(2, 0, 1)
                - np.einsum('eab,ec->abc', self.Gamma, jet.value)
                - np.einsum('be,eac->abc', jet.value, self.Gamma))

    def nabla_endomorphism(self, jet):
        """(nabla_a A)^c_b as [a, c, b]"""
        return (jet.gradient.transpose(2, 0, 1)
                + np.einsum('cae,eb->acb', self.Gamma, jet.value)
                - np.einsum('ce,eab->acb', jet.value, self.Gamma))

    @property
    def nabla_AN(self):
        return self.nabla_endomorphism(self.geometry.shape.jets.A_N)

    @property
    def nabla_As(self):
        return self.nabla_endomorphism(self.geometry.shape.jets.A_xi_star)

    @property
    def R(self):
        """R[f, c, a, b] = (R(d_a, d_b) d_c)^f"""
        return self.geometry.induced_riemann

    def ambient_on_tangents(self):
        """
        Ambient curvature on tangent arguments: ambient vectors
        Rbar(T_a, T_b)T_c as [k, c, a, b] and Rbar(T_a, T_b)xi as [k, a, b].
        """
        J = self.geometry.frame.jets
        Rbar = self.geometry.ambient_riemann
        T = J.T.value
        on_T = np.einsum('klij,lc,ia,jb->kcab', Rbar, T, T, T)
        on_xi = np.einsum('klij,l,ia,jb->kab', Rbar, J.xi.value, T, T)
        return on_T, on_xi

    def decompose(self, ambient):
        """Tangent coefficients and N coefficient of ambient vectors (leading axis)"""
        Minv = self.geometry.frame.jets.Minv.value
        coeff = np.tensordot(Minv, ambient, axes=(1, 0))
        return coeff[:self.m], coeff[self.m]


# ---------------------------------------------------------------------------
# Frame and basic properties
# ---------------------------------------------------------------------------

FRAME_INVARIANTS = ('xi_null', 'n_null', 'xi_n_pairing', 'n_screen_orthogonal', 'xi_screen_orthogonal',
                    'eta_agreement')


def check_frame_consistency(geometry, tolerances=None):
    """Frame invariants plus the cross-checks between independently derived frame data"""
    fp, sd = geometry.frame, geometry.shape
    u = fp.u
    records = [measured(f"frame.{name}", u, fp.invariants[name], 0.0, tolerances) for name in FRAME_INVARIANTS]

    min_eig = fp.invariants['screen_min_eigenvalue']
    records.append(measured('frame.screen_positive', u, max(0.0, -min_eig), 0.0, tolerances,
                            {'min_eigenvalue': min_eig}))
    for name, residual in sorted(sd.residuals.items()):
        records.append(measured(f"frame.{name}", u, residual, 0.0, tolerances))

    # 2dtau from brackets of the frame fields {xi, W_i} against the coordinate formula
    J = fp.jets
    t = PointTensors(geometry)
    worst, scale = 0.0, 0.0
    for i in range(geometry.map.n):
        from_fields = geometry.two_dtau_on_fields(J.v, J.W[:, i])
        from_coords = float(t.v @ geometry.dtau @ t.W[:, i])
        worst = max(worst, abs(from_fields - from_coords))
        scale = max(scale, abs(from_fields), abs(from_coords))
    records.append(measured('frame.dtau_brackets', u, worst, scale, tolerances))
    return records


def check_basic_properties(sd, fp, tolerances=None):
    """
    gbar(A_N X, N) = 0, A*xi = 0, B(xi, .) = 0, g-symmetry of A*, symmetry of
    A_N on the screen and (nabla_X g)(Y, Z) = B(X,Y)eta(Z) + B(X,Z)eta(Y)
    """
    u = fp.u
    g, v, W = fp.jets.g.value, fp.jets.v.value, fp.jets.W.value
    eta = fp.jets.eta.value
    AN, As, B = sd.A_N, sd.A_xi_star, sd.B

    records = [
        compare('basic.a_n_screen_valued', u, eta @ AN, 0.0 * eta, tolerances),
        compare('basic.a_star_radical', u, As @ v, 0.0 * v, tolerances, {'scale_a_star': _size(As)}),
        compare('basic.b_radical', u, B @ v, 0.0 * v, tolerances),
        compare('basic.a_star_symmetric', u, As.T @ g, g @ As, tolerances),
    ]

    gAN = W.T @ g @ AN @ W
    records.append(compare('basic.a_n_screen_symmetric', u, gAN, gAN.T, tolerances, {'integrability_witness': True}))

    Gamma = sd.jets.Gamma.value
    gj = fp.jets.g
    nabla_g = (gj.gradient.transpose(2, 0, 1)
               - np.einsum('eab,ec->abc', Gamma, gj.value)
               - np.einsum('be,eac->abc', gj.value, Gamma))
    rhs = np.einsum('ab,c->abc', B, eta) + np.einsum('ac,b->abc', B, eta)
    records.append(compare('basic.nabla_g', u, nabla_g, rhs, tolerances))
    return records


# ---------------------------------------------------------------------------
# Constant-curvature ambients
# ---------------------------------------------------------------------------

def check_constant_curvature_identities(hmap, u, tolerances=None, geometry=None):
    """
    Identities valid in a space form of curvature c: curvature of the induced
    connection, Codazzi equations for B, A_N and A*, the Gauss-Codazzi set,
    Riemann symmetries and the induced curvature computed two ways.
    """
    c_bar = certified_curvature(hmap)
    geometry = geometry or local_geometry(hmap, u)
    t = PointTensors(geometry)
    u = t.u
    m = t.m
    eye = np.eye(m)
    g, B, C, AN, As, tau, eta, v = t.g, t.B, t.C, t.AN, t.As, t.tau, t.eta, t.v
    R = t.R
    dtau = geometry.dtau
    nabla_B = t.nabla_B
    nabla_AN = t.nabla_AN
    nabla_As = t.nabla_As
    records = []

    # Ambient is the certified space form along the map
    on_T, on_xi = t.ambient_on_tangents()
    G = geometry.frame.ambient_metric
    Rbar = geometry.ambient_riemann
    d = G.shape[0]
    space_form = c_bar * (np.einsum('jl,ki->klij', G, np.eye(d)) - np.einsum('il,kj->klij', G, np.eye(d)))
    records.append(compare('curvature.ambient_space_form', u, Rbar, space_form, tolerances, {'c_bar': c_bar}))

    # Induced curvature from the Gauss equation vs the connection
    tangent, normal = t.decompose(on_T)
    gauss = (tangent
             - np.einsum('ac,fb->fcab', B, AN)
             + np.einsum('bc,fa->fcab', B, AN))
    records.append(compare('curvature.induced_two_ways', u, R, gauss, tolerances))

    item1 = (c_bar * (np.einsum('bc,fa->fcab', g, eye) - np.einsum('ac,fb->fcab', g, eye))
             - np.einsum('ac,fb->fcab', B, AN) + np.einsum('bc,fa->fcab', B, AN))
    records.append(compare('space_form.curvature', u, R, item1, tolerances))

    records.append(compare(
        'space_form.codazzi_b', u,
        nabla_B - nabla_B.transpose(1, 0, 2),
        np.einsum('ac,b->abc', B, tau) - np.einsum('bc,a->abc', B, tau), tolerances))

    records.append(compare(
        'space_form.dtau', u,
        np.einsum('eb,ea->ab', AN, B) - np.einsum('ea,eb->ab', AN, B), dtau, tolerances))

    lhs = nabla_AN.transpose(2, 1, 0) - nabla_AN
    # lhs[a, c, b] = ((nabla_b A_N) d_a - (nabla_a A_N) d_b)^c
    rhs = (c_bar * (np.einsum('b,ca->acb', eta, eye) - np.einsum('a,cb->acb', eta, eye))
           + np.einsum('b,ca->acb', tau, AN) - np.einsum('a,cb->acb', tau, AN))
    records.append(compare('space_form.codazzi_a_n', u, lhs, rhs, tolerances))

    # lhs[a, c, b] = ((nabla_a A*) d_b - (nabla_b A*) d_a)^c
    lhs = nabla_As - nabla_As.transpose(2, 1, 0)
    rhs = (np.einsum('b,ca->acb', tau, As) - np.einsum('a,cb->acb', tau, As)
           - np.einsum('ab,c->acb', dtau, v))
    records.append(compare('space_form.codazzi_a_star', u, lhs, rhs, tolerances))

    # nabla_a (P d_b) = nabla_a d_b - d_a(eta_b) xi + eta_b A* d_a + eta_b tau_a xi, as [e, b, a]
    rhs = (t.Gamma.transpose(0, 2, 1)
           - np.einsum('ba,e->eba', t.deta, v)
           + np.einsum('b,ea->eba', eta, As)
           + np.einsum('b,a,e->eba', eta, tau, v))
    records.append(compare('space_form.projection_derivative', u, t.nabla_P, rhs, tolerances))

    P = t.P
    lhs = np.einsum('ed,adb->aeb', P, nabla_As - nabla_As.transpose(2, 1, 0))
    rhs = np.einsum('b,ca->acb', tau, As) - np.einsum('a,cb->acb', tau, As)
    records.append(compare('space_form.screen_codazzi_a_star', u, lhs, rhs, tolerances))

    lhs = np.einsum('de,eba->dba', P, t.nabla_P)
    rhs = np.einsum('de,eab->dba', P, t.Gamma) + np.einsum('b,da->dba', eta, As)
    records.append(compare('space_form.screen_connection', u, lhs, rhs, tolerances))

    records.extend(_gauss_codazzi(geometry, t, on_T, on_xi, normal, nabla_B, tolerances))
    records.extend(_riemann_symmetries(geometry, t, tolerances))
    return records


def _gauss_codazzi(geometry, t, on_T, on_xi, normal, nabla_B, tolerances):
    u, W = t.u, t.W
    G = geometry.frame.ambient_metric
    N = geometry.frame.N
    R, Rs = t.R, geometry.screen_riemann
    records = []

    # g(R(a,b)W_i, W_j) = g(R*(a,b)W_i, W_j) + C(a,W_i)B(b,W_j) - C(b,W_i)B(a,W_j)
    gW = t.g @ W
    lhs = np.einsum('fcab,ci,fj->ijab', R, W, gW)
    CW, BW = t.C @ W, t.B @ W
    rhs = (np.einsum('fiab,fj->ijab', Rs, gW)
           + np.einsum('ai,bj->ijab', CW, BW) - np.einsum('bi,aj->ijab', CW, BW))
    records.append(compare('gauss_codazzi.screen', u, lhs, rhs, tolerances))

    # gbar(Rbar(a,b)c, xi) = (nabla_a B)(b,c) - (nabla_b B)(a,c) + tau_a B_bc - tau_b B_ac
    rhs = (nabla_B - nabla_B.transpose(1, 0, 2)
           + np.einsum('a,bc->abc', t.tau, t.B) - np.einsum('b,ac->abc', t.tau, t.B))
    records.append(compare('gauss_codazzi.radical', u, normal.transpose(1, 2, 0), rhs, tolerances))

    # eta(R(a,b)c) = gbar(Rbar(a,b)c, N)
    GN = G @ N
    records.append(compare('gauss_codazzi.transversal', u,
                           np.einsum('f,fcab->cab', t.eta, R), np.einsum('kcab,k->cab', on_T, GN), tolerances))

    # gbar(Rbar(a,b)xi, N) = C(b, A* d_a) - C(a, A* d_b) - 2dtau(a, b)
    CA = t.C @ t.As
    rhs = CA.T - CA - geometry.dtau
    records.append(compare('gauss_codazzi.xi_n', u, np.einsum('kab,k->ab', on_xi, GN), rhs, tolerances))
    return records


def _riemann_symmetries(geometry, t, tolerances):
    u, W = t.u, t.W
    R = t.R
    records = [
        compare('riemann.antisymmetry', u, R, -R.transpose(0, 1, 3, 2), tolerances),
        compare('riemann.bianchi', u, R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2),
                np.zeros_like(R), tolerances),
    ]

    # Rs4[i, j, k, l] = g(R(W_i, W_j) W_k, W_l)
    Rs4 = np.einsum('fcab,ai,bj,ck,fl->ijkl', R, W, W, W, t.g @ W)
    Bs, Cs = W.T @ t.B @ W, W.T @ t.C @ W
    rhs = (np.einsum('jk,il->ijkl', Bs, Cs) + np.einsum('jl,ik->ijkl', Bs, Cs)
           - np.einsum('il,jk->ijkl', Bs, Cs) - np.einsum('ik,jl->ijkl', Bs, Cs))
    records.append(compare('riemann.metric_defect', u, Rs4 + Rs4.transpose(0, 1, 3, 2), rhs, tolerances))

    witness = compare('basic.a_n_screen_symmetric', u, Cs, Cs.T, tolerances)
    if not witness.passed:
        records.append(vacuous('riemann.pair_symmetry', u, tolerances, 'screen distribution is not integrable'))
    else:
        # g(R(Y,W)X,Z) - g(R(X,Z)Y,W) = g(R(Z,X)W,Y) - g(R(W,Y)Z,X) with X,Y,Z,W = i,j,k,l
        lhs = Rs4.transpose(2, 0, 3, 1) - Rs4.transpose(0, 2, 1, 3)
        rhs = Rs4.transpose(1, 3, 0, 2) - Rs4.transpose(3, 1, 2, 0)
        records.append(compare('riemann.pair_symmetry', u, lhs, rhs, tolerances))
    return records


# ---------------------------------------------------------------------------
# Codazzi-type lemma (tau vanishing on the screen)
# ---------------------------------------------------------------------------

CODAZZI_NAMES = ('codazzi.screen_symmetric', 'codazzi.screen_symmetric_projected', 'codazzi.radical_exchange',
                 'codazzi.radical_exchange_projected', 'codazzi.g_symmetric', 'codazzi.cyclic',
                 'codazzi.radical_cyclic', 'codazzi.radical_derivative')


def check_codazzi_lemma(hmap, u, tolerances=None, geometry=None):
    """Derivatives of A* when tau vanishes along the screen"""
    certified_curvature(hmap)
    geometry = geometry or local_geometry(hmap, u)
    t = PointTensors(geometry)
    u = t.u
    W, v, g, P, As = t.W, t.v, t.g, t.P, t.As
    tau_xi = float(t.tau @ v)

    precondition = measured('codazzi.tau_screen', u, _size(t.tau @ W), _size(t.tau), tolerances)
    if not precondition.passed:
        return [precondition] + [vacuous(name, u, tolerances, 'tau does not vanish on the screen')
                                 for name in CODAZZI_NAMES]

    nAs = t.nabla_As
    records = [precondition]

    # S[i, c, j] = ((nabla_{W_i} A*) W_j)^c
    S = np.einsum('acb,ai,bj->icj', nAs, W, W)
    records.append(compare('codazzi.screen_symmetric', u, S, S.transpose(2, 1, 0), tolerances))
    PS = np.einsum('dc,icj->idj', P, S)
    records.append(compare('codazzi.screen_symmetric_projected', u, PS, PS.transpose(2, 1, 0), tolerances))

    # (nabla_X A*)xi = (nabla_xi A*)X + tau(xi)A*X - C(xi, A*X)xi for screen X
    lhs = np.einsum('acb,ai,b->ci', nAs, W, v)
    c_xi = v @ t.C @ As @ W
    rhs = (np.einsum('acb,a,bi->ci', nAs, v, W) + tau_xi * (As @ W) - np.einsum('i,c->ci', c_xi, v))
    records.append(compare('codazzi.radical_exchange', u, lhs, rhs, tolerances))

    # projected: (nabla*_X A*)xi = (nabla*_xi A*)X + tau(xi)A*X
    rhs = np.einsum('acb,a,bi->ci', nAs, v, W) + tau_xi * (As @ W)
    records.append(compare('codazzi.radical_exchange_projected', u, P @ lhs, P @ rhs, tolerances))

    # g((nabla_X A*)Y, Z) symmetric in screen Y, Z for every tangent X
    M = np.einsum('acb,bj,cd,dk->ajk', nAs, W, g, W)
    records.append(compare('codazzi.g_symmetric', u, M, M.transpose(0, 2, 1), tolerances))

    Q = np.einsum('acb,ai,bj,cd,dk->ijk', nAs, W, W, g, W)
    records.append(compare('codazzi.cyclic', u, Q, Q.transpose(2, 1, 0), tolerances))

    # g((nabla_X A*)xi, Z) = g((nabla_Z A*)xi, X) for screen X, Z
    K = np.einsum('acb,ai,b,cd,dk->ik', nAs, W, v, g, W)
    records.append(compare('codazzi.radical_cyclic', u, K, K.T, tolerances))

    # g((nabla_xi A*)Y, Z) = g(A*^2 Y, Z) - tau(xi) g(A*Y, Z)
    lhs = np.einsum('acb,a,bj,cd,dk->jk', nAs, v, W, g, W)
    rhs = W.T @ (As @ As).T @ g @ W - tau_xi * (W.T @ As.T @ g @ W)
    records.append(compare('codazzi.radical_derivative', u, lhs, rhs, tolerances))
    return records


# ---------------------------------------------------------------------------
# Eigendistributions of A* and their leaves
# ---------------------------------------------------------------------------

EIGEN_NAMES = ('codazzi.mixed_derivative', 'codazzi.mixed_derivative_screen', 'codazzi.eigen_parallel',
               'codazzi.eigen_orthogonal')


def curvature_jets(sd, fp):
    """First-order jets of the distinct screen principal curvatures (cluster means)"""
    curv = sd.curvatures
    jets = []
    for c, lam in enumerate(curv.distinct):
        Y = curv.screen_vectors[:, curv.labels == c]
        dB = np.einsum('ia,ijx,jb->abx', Y, sd.jets.Bs.gradient, Y)
        dg = np.einsum('ia,ijx,jb->abx', Y, fp.jets.gs.gradient, Y)
        grad = np.trace(dB - lam * dg, axis1=0, axis2=1) / Y.shape[1]
        jets.append(Jet2(float(lam), grad, None))
    return jets


def eigen_projectors(sd, fp, lam_jets):
    """Jets of the spectral projectors prod_{j != i} (A* - lambda_j) / (lambda_i - lambda_j) on the screen basis"""
    As, _ = screen_endomorphisms(sd, fp)
    eye = np.eye(As.shape[0])
    projectors = []
    for i, li in enumerate(lam_jets):
        proj = Jet2.constant(eye, As.nvars, order=1)
        for j, lj in enumerate(lam_jets):
            if j != i:
                factor = (As - lj * eye) * (li - lj).reciprocal()
                proj = jet_einsum('ij,jk->ik', proj, factor)
        projectors.append(proj)
    return projectors


def eigen_fields(geometry):
    """
    Per cluster: parameter-basis eigenvectors E (columns) and the covariant
    derivatives nabla_a Y of the eigenvector fields Y = W Pi y through them,
    indexed [s, c, a].
    """
    fp, sd = geometry.frame, geometry.shape
    curv = sd.curvatures
    W, Gamma = fp.jets.W, sd.jets.Gamma.value
    lam_jets = curvature_jets(sd, fp)
    fields = []
    for c, proj in enumerate(eigen_projectors(sd, fp, lam_jets)):
        Y = curv.screen_vectors[:, curv.labels == c]
        derivs = []
        for y in Y.T:
            field_jet = jet_einsum('ai,i->a', W, jet_einsum('ij,j->i', proj, y))
            derivs.append(field_jet.gradient + np.einsum('cae,e->ca', Gamma, field_jet.value))
        fields.append((W.value @ Y, np.array(derivs)))
    return lam_jets, fields


def check_eigendistributions(hmap, u, tolerances=None, geometry=None):
    """
    Derivatives along and across the eigendistributions T_lambda of A*, and
    the curvature of their leaves.

    With tau vanishing on the screen, for Y in T_lambda and Z in T_mu:
    g((nabla_X A*)Y, Z) = (lambda - mu) g(nabla_X Y, Z), and Codazzi gives
    g(nabla*_X Y, Z) = g(X, Y) Z(lambda) / (lambda - mu) for X in T_lambda,
    which vanishes once lambda is constant along T_mu. On a leaf of a
    quasi-conformal screen, R* restricted to T_lambda has constant curvature
    c + 2 lambda (phi lambda + psi).
    """
    c_bar = certified_curvature(hmap)
    geometry = geometry or local_geometry(hmap, u)
    t = PointTensors(geometry)
    u = t.u
    g, P = t.g, t.P
    curv = geometry.shape.curvatures
    records = [_leaf_curvature(geometry, t, c_bar, tolerances)]

    if curv.count == 1:
        return records + [vacuous(name, u, tolerances, 'single screen principal curvature')
                          for name in EIGEN_NAMES]
    precondition = measured('codazzi.tau_screen', u, _size(t.tau @ t.W), _size(t.tau), tolerances)
    if not precondition.passed:
        return records + [vacuous(name, u, tolerances, 'tau does not vanish on the screen')
                          for name in EIGEN_NAMES]

    nAs = t.nabla_As
    lam_jets, fields = eigen_fields(geometry)
    mixed = ([], [])
    mixed_screen = ([], [])
    parallel = ([], [])
    orthogonal = ([], [])
    for p, (Ep, dYp) in enumerate(fields):
        for q, (Eq, dYq) in enumerate(fields):
            if p == q:
                continue
            gap = float(lam_jets[p].value - lam_jets[q].value)
            gZ = g @ Eq
            # [s, t, a]: Y_s in T_p, Z_t in T_q, X = d_a
            mixed[0].append(np.einsum('acb,bs,ct->sta', nAs, Ep, gZ))
            mixed[1].append(gap * np.einsum('sca,ct->sta', dYp, gZ))
            mixed_screen[0].append(np.einsum('ec,acb,bs,et->sta', P, nAs, Ep, gZ))
            mixed_screen[1].append(gap * np.einsum('ec,sca,et->sta', P, dYp, gZ))

            # derivatives of lambda_p along T_q
            across = lam_jets[p].gradient @ Eq

            # [r, s, t]: X_r, Y_s in T_p, Z_t in T_q
            parallel[0].append(np.einsum('ec,sca,ar,et->rst', P, dYp, Ep, gZ))
            parallel[1].append(np.einsum('rs,t->rst', Ep.T @ g @ Ep, across) / gap)

            # [r, s, w]: X_r, W_w in T_p, Y_s in T_q
            orthogonal[0].append(np.einsum('ec,sca,ar,ew->rsw', P, dYq, Ep, g @ Ep))
            orthogonal[1].append(np.einsum('rw,s->rsw', Ep.T @ g @ Ep, across) / -gap)

    def flat(parts):
        return np.concatenate([x.ravel() for x in parts])

    detail = {'distinct': int(curv.count)}
    records.append(compare('codazzi.mixed_derivative', u, flat(mixed[0]), flat(mixed[1]), tolerances, detail))
    records.append(compare('codazzi.mixed_derivative_screen', u, flat(mixed_screen[0]), flat(mixed_screen[1]),
                           tolerances, detail))
    records.append(compare('codazzi.eigen_parallel', u, flat(parallel[0]), flat(parallel[1]), tolerances, detail))
    records.append(compare('codazzi.eigen_orthogonal', u, flat(orthogonal[0]), flat(orthogonal[1]),
                           tolerances, detail))
    return records


def _leaf_curvature(geometry, t, c_bar, tolerances):
    """g(R*(X,Y)Z,W) on each T_lambda of dimension >= 2 against constant curvature c + 2 lambda mu"""
    fp, sd = geometry.frame, geometry.shape
    u, g = t.u, t.g
    curv = sd.curvatures
    fit = fit_quasi_conformal(sd, fp, tolerances)
    if not fit.accepted:
        return vacuous('leaf.curvature', u, tolerances, 'no quasi-conformal pair')
    blocks = [c for c in range(curv.count) if curv.multiplicities[c] >= 2]
    if not blocks:
        return vacuous('leaf.curvature', u, tolerances, 'every screen principal curvature is simple')

    Rs = geometry.screen_riemann
    lhs, rhs, sectional = [], [], []
    for c in blocks:
        Y = curv.screen_vectors[:, curv.labels == c]
        E = t.W @ Y
        G = E.T @ g @ E
        lam = float(curv.distinct[c])
        k = c_bar + 2.0 * lam * (fit.phi * lam + fit.psi)
        lhs.append(np.einsum('dqab,ai,bj,qk,dl->ijkl', Rs, E, E, Y, g @ E).ravel())
        rhs.append(k * (np.einsum('jk,il->ijkl', G, G) - np.einsum('ik,jl->ijkl', G, G)).ravel())
        sectional.append(k)
    return compare('leaf.curvature', u, np.concatenate(lhs), np.concatenate(rhs), tolerances,
                   {'sectional': sectional, 'phi': fit.phi, 'psi': fit.psi})


# ---------------------------------------------------------------------------
# Quasi-conformal pair
# ---------------------------------------------------------------------------

@dataclass
class QuasiConformalFit:
    """Least-squares pair (phi, psi) with A_N = phi A* + psi P"""

    phi: float
    psi: float
    residual: float
    degenerate: bool = False
    psi_unit: float = 0.0
    tolerance: float = DEFAULT_TOL
    grw_match: Optional[str] = None

    @property
    def accepted(self):
        return self.residual <= self.tolerance


def screen_endomorphisms(sd, fp):
    """Jets of A* and A_N on the screen basis: As = gs^-1 Bs, AN = gs^-1 Cs^T"""
    gs_inv = jet_inverse(fp.jets.gs.truncate())
    As = jet_einsum('ij,jk->ik', gs_inv, sd.jets.Bs)
    AN = jet_einsum('ij,kj->ik', gs_inv, sd.jets.Cs)
    return As, AN


def quasi_conformal_jets(sd, fp):
    """
    First-order jets of the fitted (phi, psi) and the degeneracy flag.

    Normal equations of min |AN - phi As - psi I|^2 in the trace inner
    product; when As is a multiple of the identity phi = 0 and psi takes the
    mean of AN.
    """
    n = fp.screen_param.shape[1]
    As, AN = screen_endomorphisms(sd, fp)
    eye = np.eye(n)
    a11 = jet_einsum('ij,ji->', As, As)
    a12 = jet_einsum('ij,ij->', As, eye)
    b1 = jet_einsum('ij,ji->', As, AN)
    b2 = jet_einsum('ij,ij->', AN, eye)

    det = n * float(a11.value) - float(a12.value) ** 2
    if det <= DEGENERATE_FIT * (1.0 + n * float(a11.value)):
        return a12 * 0.0, b2 * (1.0 / n), True, (a12, b2)
    det_jet = a11 * n - a12 * a12
    phi = (b1 * n - a12 * b2) / det_jet
    psi = (a11 * b2 - a12 * b1) / det_jet
    return phi, psi, False, (a12, b2)


def fit_quasi_conformal(sd, fp, tolerances=None, ambient=None):
    """Fit A_N = phi A* + psi P on the screen; A_N xi enters the residual"""
    n = fp.screen_param.shape[1]
    phi_j, psi_j, degenerate, (tr_as, tr_an) = quasi_conformal_jets(sd, fp)
    phi, psi = float(phi_j.value), float(psi_j.value)

    gs = fp.screen_metric
    As = np.linalg.solve(gs, sd.jets.Bs.value)
    AN = np.linalg.solve(gs, sd.jets.Cs.value.T)
    misfit = AN - phi * As - psi * np.eye(n)
    def g_norm2(X):
        return max(0.0, float(np.trace(np.linalg.solve(gs, X.T @ gs @ X))))

    an_xi = sd.A_N @ fp.xi_param
    an_xi2 = max(0.0, float(an_xi @ fp.jets.g.value @ an_xi))
    raw = np.sqrt(g_norm2(misfit) + an_xi2)
    scale = np.sqrt(g_norm2(AN) + an_xi2)

    psi_unit = (float(tr_an.value) - float(tr_as.value)) / n
    fit = QuasiConformalFit(
        phi=phi,
        psi=psi,
        residual=float(raw) / (1.0 + float(scale)),
        degenerate=degenerate,
        psi_unit=psi_unit,
        tolerance=_tols(tolerances).get('quasi_conformal.fit'),
    )
    if ambient is not None and ambient.is_warped:
        fit.grw_match = grw_relation_match(psi_unit, ambient.warped.hubble(fp.p[0]))
    return fit


def grw_relation_match(psi_unit, hubble, tol=1e-8):
    """Which GRW statement the fitted psi (at phi = 1) agrees with"""
    candidates = {'rho_prime_over_rho': hubble, 'sqrt2_rho_prime_over_rho': SQRT2 * hubble}
    hits = [name for name, target in candidates.items() if abs(psi_unit - target) <= tol * (1.0 + abs(target))]
    if len(hits) == 2:
        return 'both'
    return hits[0] if hits else 'neither'


def quasi_conformal_records(fit, sd, fp, tolerances=None):
    """Fit residual, commutation of A* and A_N, and mu_i = phi lambda_i + psi"""
    u = fp.u
    gs = fp.screen_metric
    As = np.linalg.solve(gs, sd.jets.Bs.value)
    AN = np.linalg.solve(gs, sd.jets.Cs.value.T)
    curv = sd.curvatures
    Y = curv.screen_vectors
    mu = np.einsum('ia,ij,ja->a', Y, sd.jets.Cs.value, Y)
    detail = {'phi': fit.phi, 'psi': fit.psi, 'psi_unit': fit.psi_unit, 'degenerate': fit.degenerate}
    if fit.grw_match is not None:
        detail['grw_match'] = fit.grw_match
    return [
        measured('quasi_conformal.fit', u, fit.residual, 0.0, tolerances, detail),
        compare('quasi_conformal.commute', u, As @ AN, AN @ As, tolerances),
        compare('quasi_conformal.eigen_relation', u, mu, fit.phi * curv.values + fit.psi, tolerances),
    ]


# ---------------------------------------------------------------------------
# Ricci tensor and Einstein structure
# ---------------------------------------------------------------------------

@dataclass
class EinsteinFit:
    """Ric = k g fitted in the adapted frame {xi, E_1..E_n}"""

    k: float
    residual: float
    symmetry_residual: float
    tolerance: float = DEFAULT_TOL

    @property
    def accepted(self):
        return self.residual <= self.tolerance


def induced_ricci(sd, fp, c_bar):
    """Ric(X, Y) = c n g(X,Y) + B(X,Y) tr A_N - g(A_N X, A* Y)"""
    n = fp.screen_param.shape[1]
    g = fp.jets.g.value
    return c_bar * n * g + sd.B * np.trace(sd.A_N) - sd.A_N.T @ g @ sd.A_xi_star


def adapted_frame(sd, fp):
    """Columns xi, E_1..E_n with E g-orthonormal eigenvectors of A*"""
    return np.column_stack([fp.xi_param, fp.screen_param @ sd.curvatures.screen_vectors])


def ricci_and_einstein(sd, fp, c_bar, n=None, tolerances=None):
    n = n or fp.screen_param.shape[1]
    ric = induced_ricci(sd, fp, c_bar)
    F = adapted_frame(sd, fp)
    ric_f = F.T @ ric @ F
    k = float(np.trace(ric_f[1:, 1:])) / n
    target = np.diag([0.0] + [k] * n)
    size = float(np.linalg.norm(ric_f))
    fit = EinsteinFit(
        k=k,
        residual=float(np.linalg.norm(ric_f - target)) / (1.0 + size),
        symmetry_residual=float(np.linalg.norm(ric - ric.T)) / (1.0 + float(np.linalg.norm(ric))),
        tolerance=_tols(tolerances).get('einstein.fit'),
    )
    return ric, fit


def ricci_records(geometry, ric, fit, tolerances=None):
    u = geometry.frame.u
    direct = np.einsum('ayax->xy', geometry.induced_riemann)
    return [
        measured('einstein.fit', u, fit.residual, 0.0, tolerances, {'k': fit.k}),
        measured('einstein.ricci_symmetry', u, fit.symmetry_residual, 0.0, tolerances),
        compare('einstein.ricci_cross_check', u, ric, direct, tolerances),
    ]


def check_einstein_structure(curvatures, fit, c_bar, k, n, tolerances=None, einstein=None, point=None):
    """
    Screen principal curvatures of a null Einstein hypersurface with
    quasi-conformal pair (phi, psi): each is a root of
    phi x^2 - ((n-1)psi + phi tr A*)x + (k - c n) = 0, at most two are
    distinct, and the roots obey the sum/product and single-root relations.
    """
    if einstein is not None and not einstein.accepted:
        raise NotEinstein(f"Ric is not a multiple of g (residual {einstein.residual:.3e})", point=point)
    if not fit.accepted:
        raise NotEinstein(f"No quasi-conformal pair (residual {fit.residual:.3e})", point=point)

    u = point
    lams = np.asarray(curvatures.values, dtype=float)
    distinct = np.asarray(curvatures.distinct, dtype=float)
    l = len(distinct)
    tr_a = float(np.sum(lams))
    phi, psi = fit.phi, fit.psi
    shifted = k - c_bar * n
    records = []

    representative = False
    if fit.degenerate and l == 1 and abs(distinct[0]) > ZERO_CURVATURE:
        # any pair on phi*lambda + psi = mu fits; take phi = -mu/lambda, psi = 2 mu
        mu = phi * distinct[0] + psi
        phi, psi = -mu / distinct[0], 2.0 * mu
        representative = True
    detail = {'phi': phi, 'psi': psi, 'k': k, 'representative_pair': representative}

    terms = [phi * lams ** 2, ((n - 1) * psi + phi * tr_a) * lams, np.full_like(lams, shifted)]
    quad = terms[0] - terms[1] + terms[2]
    records.append(measured('einstein.quadratic', u, _size(quad), max(_size(x) for x in terms), tolerances, detail))
    records.append(measured('einstein.curvature_count', u, max(0, l - 2), 0.0, tolerances, {'distinct': l}))

    nonzero_phi = abs(phi) > ZERO_CURVATURE
    nonzero_psi = abs(psi) > ZERO_CURVATURE
    if l == 1:
        lam = float(distinct[0])
        records.append(compare('einstein.factor_relation', u, k,
                               c_bar * n + (n - 1) * (phi * lam + psi) * lam, tolerances))
        if representative:
            # phi = -mu/lambda, psi = 2mu puts lambda at -psi/(2 phi) by construction
            records.append(vacuous('einstein.single_root', u, tolerances, 'representative pair of a degenerate fit'))
            parts = ((n - 1) * psi ** 2, 4.0 * phi * shifted)
            records.append(measured('einstein.discriminant', u, parts[0] + parts[1], max(map(abs, parts)),
                                    tolerances, detail))
        elif nonzero_phi:
            records.append(compare('einstein.single_root', u, lam, -psi / (2.0 * phi), tolerances))
            parts = ((n - 1) * psi ** 2, 4.0 * phi * shifted)
            records.append(measured('einstein.discriminant', u, parts[0] + parts[1], max(map(abs, parts)),
                                    tolerances))
        else:
            records.append(vacuous('einstein.single_root', u, tolerances, 'phi = 0'))
            records.append(vacuous('einstein.discriminant', u, tolerances, 'phi = 0'))
    elif l == 2 and nonzero_phi:
        lam, mu = (float(x) for x in distinct)
        records.append(compare('einstein.root_sum', u, lam + mu, ((n - 1) * psi + phi * tr_a) / phi, tolerances))
        records.append(compare('einstein.root_product', u, lam * mu, shifted / phi, tolerances))
        mult = list(curvatures.multiplicities)
        if n >= 3 and sorted(mult) == [1, n - 1]:
            single = float(distinct[mult.index(1)])
            other = float(distinct[1 - mult.index(1)])
            if nonzero_psi:
                records.append(compare('einstein.split_single', u, single,
                                       (n - 2) * (c_bar * n - k) / ((n - 1) * psi), tolerances))
            else:
                records.append(vacuous('einstein.split_single', u, tolerances, 'psi = 0'))
            records.append(compare('einstein.split_multiple', u, other,
                                   -(n - 1) * psi / ((n - 2) * phi), tolerances))

    if not nonzero_phi and not fit.degenerate:
        if nonzero_psi:
            target = shifted / ((n - 1) * psi)
            records.append(compare('einstein.phi_zero_single_curvature', u, lams, np.full_like(lams, target),
                                   tolerances))
        else:
            records.append(vacuous('einstein.phi_zero_single_curvature', u, tolerances, 'phi = psi = 0'))
    return records


# ---------------------------------------------------------------------------
# Cartan identities
# ---------------------------------------------------------------------------

def cartan_sums(values, labels, c_bar, an_diagonal):
    """
    Per unit eigenvector E_i: sum over E_j in other clusters of
    (c + lambda_i g(A_N E_j, E_j) + lambda_j g(A_N E_i, E_i)) / (lambda_i - lambda_j)
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels)
    an = np.asarray(an_diagonal, dtype=float)
    sums, scales = [], []
    for i, lam in enumerate(values):
        others = labels != labels[i]
        terms = (c_bar + lam * an[others] + values[others] * an[i]) / (lam - values[others])
        sums.append(float(np.sum(terms)))
        scales.append(float(np.sum(np.abs(terms))))
    return np.array(sums), np.array(scales)


def cartan_conformal_sums(distinct, multiplicities, c_bar, phi, psi):
    """Per distinct curvature: sum_j m_j (c + 2 phi l_i l_j + psi (l_i + l_j)) / (l_i - l_j)"""
    distinct = np.asarray(distinct, dtype=float)
    mult = np.asarray(multiplicities, dtype=float)
    sums, scales = [], []
    for i, lam in enumerate(distinct):
        others = np.arange(len(distinct)) != i
        lj = distinct[others]
        terms = mult[others] * (c_bar + 2.0 * phi * lam * lj + psi * (lam + lj)) / (lam - lj)
        sums.append(float(np.sum(terms)))
        scales.append(float(np.sum(np.abs(terms))))
    return np.array(sums), np.array(scales)


def check_cartan(sd, fit, c_bar, tolerances=None, point=None, precondition=None):
    """Cartan identities of a null screen isoparametric hypersurface"""
    failed = [r.identity_name for r in (precondition or []) if not r.passed]
    if failed:
        raise NotIsoparametric(f"Cartan identities need an isoparametric hypersurface; failed: {failed}",
                               point=point, failed=failed)

    u = point
    curv = sd.curvatures
    records = []
    if curv.count == 1:
        records.append(vacuous('cartan.sum', u, tolerances, 'single screen principal curvature'))
        records.append(vacuous('cartan.conformal', u, tolerances, 'single screen principal curvature'))
    else:
        Y = curv.screen_vectors
        an = np.einsum('ia,ij,ja->a', Y, sd.jets.Cs.value, Y)
        sums, scales = cartan_sums(curv.values, curv.labels, c_bar, an)
        records.append(measured('cartan.sum', u, _size(sums), _size(scales), tolerances,
                                {'sums': sums.tolist()}))
        if fit is not None and fit.accepted:
            sums, scales = cartan_conformal_sums(curv.distinct, curv.multiplicities, c_bar, fit.phi, fit.psi)
            records.append(measured('cartan.conformal', u, _size(sums), _size(scales), tolerances,
                                    {'sums': sums.tolist(), 'phi': fit.phi, 'psi': fit.psi}))
        else:
            records.append(vacuous('cartan.conformal', u, tolerances, 'no quasi-conformal pair'))

    if c_bar in (0.0, -1.0):
        records.append(measured('cartan.curvature_count', u, max(0, curv.count - 2), 0.0, tolerances,
                                {'distinct': curv.count}))
        if c_bar == 0.0 and curv.count == 2:
            records.append(measured('cartan.zero_curvature', u, float(np.min(np.abs(curv.distinct))),
                                    _size(curv.distinct), tolerances))
    return records


# ---------------------------------------------------------------------------
# Grid-level checks
# ---------------------------------------------------------------------------

def check_isoparametric(hmap, geometries, tolerances=None):
    """
    Screen derivatives of the screen principal curvatures over a grid, plus
    the adapted-pair conditions: tau on the screen and screen derivatives of
    the fitted (phi, psi). Each record reports the worst grid point.
    """
    worst = {name: (-1.0, 0.0, None) for name in ('isoparametric.curvature_derivative',
                                                   'isoparametric.tau_screen',
                                                   'isoparametric.pair_phi',
                                                   'isoparametric.pair_psi')}

    def keep(name, raw, scale, u):
        if raw / (1.0 + scale) > worst[name][0] / (1.0 + worst[name][1]) or worst[name][2] is None:
            worst[name] = (raw, scale, u)

    for geometry in geometries:
        fp, sd = geometry.frame, geometry.shape
        E = fp.screen_param @ sd.curvatures.screen_vectors
        lam_scale = _size(sd.curvatures.values)
        raw = max(_size(curvature_derivatives(geometry, E[:, i])) for i in range(E.shape[1]))
        keep('isoparametric.curvature_derivative', raw, lam_scale, fp.u)
        keep('isoparametric.tau_screen', _size(sd.tau @ E), _size(sd.tau), fp.u)

        phi, psi, _, _ = quasi_conformal_jets(sd, fp)
        keep('isoparametric.pair_phi', _size(phi.gradient @ E), abs(float(phi.value)), fp.u)
        keep('isoparametric.pair_psi', _size(psi.gradient @ E), abs(float(psi.value)), fp.u)

    records = []
    for name, (raw, scale, u) in worst.items():
        if u is None:
            records.append(vacuous(name, None, tolerances, 'empty grid'))
        else:
            records.append(measured(name, u, raw, scale, tolerances, {'map': hmap.name}))
    return records


def check_umbilical(sd, fp, fit=None, tolerances=None):
    """Fit B = beta g on the screen"""
    n = fp.screen_param.shape[1]
    As = np.linalg.solve(fp.screen_metric, sd.jets.Bs.value)
    beta = float(np.trace(As)) / n
    misfit = As - beta * np.eye(n)
    raw = np.sqrt(max(0.0, float(np.trace(misfit @ misfit))))
    scale = np.sqrt(max(0.0, float(np.trace(As @ As))))
    record = measured('umbilical', fp.u, raw, scale, tolerances, {'beta': beta})
    if record.passed and fit is not None and fit.accepted:
        record.detail['leaf_components'] = [beta * fit.phi + fit.psi, beta]
    return record


def check_ricci_flat_desitter(k_values, c_bar, curvature_counts, margin=0.1, tolerances=None, point=None):
    """A single-curvature null Einstein hypersurface of de Sitter space is never Ricci flat"""
    counts = list(curvature_counts)
    if c_bar != 1.0 or not counts or any(l != 1 for l in counts):
        return vacuous('ricci_flat.nonexistence', point, tolerances, 'needs c = 1 and one screen curvature')
    min_k = float(np.min(np.abs(np.asarray(k_values, dtype=float))))
    return measured('ricci_flat.nonexistence', point, max(0.0, margin - min_k), 0.0, tolerances,
                    {'min_abs_k': min_k, 'margin': margin})
