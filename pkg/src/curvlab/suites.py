"""
Identity suites.

Each suite draws seeded random data, evaluates both sides of the
identities of one area and collects the gaps in a :class:`Report`. Rows
taken over many draws report the worst gap against an expected zero;
table rows report the computed value itself.

    >>> from curvlab.suites import run_suite
    >>> report = run_suite('algebra')
    >>> report.passed
    True
"""

from __future__ import annotations

import itertools
import logging
import zlib
from typing import Callable, List, Mapping, Optional

import numpy as np

from .alg4 import (
    IDENTITY, J1, OMEGA1, STAR, CurvOp, inner, kulkarni_nomizu,
    random_bianchi, random_frame, random_sym4, random_symmetric, wedge2)
from .almost_cx import (
    chern_difference_residual, chern_product_density, ec1_fd, eta_and_c1,
    hermitian_delta, kahler_identities, make_acs, thm12_densities,
    validate_acs)
from .chartgeom import (
    biaxial_chart, conformal_curvature, conformal_identities, flat_chart,
    prop11_residual, random_poly_chart, riemann_frame, stereographic_chart)
from .conf import ExperimentConfig
from .curvops import (
    FOUR_PI2, IsotropicPlane, basic_invariants, bianchi, c1_squared,
    chern_forms, conjugations, decompose, euler_basis_sum, euler_form,
    euler_shift, invariance_defect, isotropic_sectional, norm_formulas,
    pontrjagin_basis_sum, pontrjagin_form, ricci, scalar, sectional,
    weitzenbock, weitzenbock_definition)
from .errors import WorkbenchError, WorkbenchErrorCode
from .exprfield import eval_value, exp, parse
from .quat8 import (
    OMEGA_NORM2, QUADS, angle8, constant_curvature8, fundamental_form,
    frame_construction, hk_from_split, hodge8, homotopy_omega, in_T,
    random_curvature8, rotate_form, standard_triple, weitzenbock4,
    weitzenbock4_matrix)
from .report import Report, environment
from .transgression import (
    bundle_map_residual, closed_branch_residual, gauge_delta,
    modified_curvature, random_delta, random_poly, rotation_map,
    t_integral_defect, verify_prop71)

__all__ = ['SUITES', 'run_suite']

_LOG = logging.getLogger(__name__)

_G = np.eye(4)
_P_PLUS = 0.5 * (IDENTITY + STAR)
_P_MINUS = 0.5 * (IDENTITY - STAR)


def _worst(values) -> float:
    return float(np.max(np.abs(np.asarray(values, dtype=float)), initial=0.0))


class _Suite:
    """
    Seeded generators and the report under construction.

    Random data comes from :meth:`stream` and :meth:`streams`: generators
    spawned from ``SeedSequence(seed)`` under a key naming the block that
    draws them, so a block sees the same numbers whatever the other blocks
    drew and in whatever order they ran. ``ref`` names the statement the
    next checks belong to.
    """

    def __init__(self, name: str, cfg: ExperimentConfig, kind: str = 'verify',
                 **counts):
        self.cfg = cfg
        self.counts = counts
        self.ref = ''
        self.report = Report(
            kind, name, environment=environment(seed=cfg.seed, **counts))

    @property
    def draws(self) -> int:
        return int(self.counts['draws'])

    def _seeds(self, key: str) -> np.random.SeedSequence:
        # SeedSequence takes non-negative entropy only
        return np.random.SeedSequence(
            self.cfg.seed % (1 << 64),
            spawn_key=(zlib.crc32(key.encode('utf-8')),))

    def stream(self, key: str) -> np.random.Generator:
        return np.random.default_rng(self._seeds(key))

    def streams(self, key: str, n: int) -> List[np.random.Generator]:
        """One generator per draw of block ``key``."""
        return [np.random.default_rng(seq)
                for seq in self._seeds(key).spawn(n)]

    def check(self, name: str, identity: str, computed, expected=0.0,
              tol: float = 1e-10, ref: Optional[str] = None):
        override = self.cfg.tolerance
        return self.report.add(name, self.ref if ref is None else ref,
                               identity, computed, expected,
                               tol if override is None else override)

    def gap(self, name: str, identity: str, values, tol: float = 1e-10,
            ref: Optional[str] = None):
        return self.check(name, identity, _worst(values), 0.0, tol, ref)

    def points(self, chart, n: int, key: Optional[str] = None,
               shrink: float = 0.8) -> np.ndarray:
        box = chart.box * shrink
        rng = self.stream(key or f'points {chart.name}')
        return rng.uniform(box[:, 0], box[:, 1], size=(n, chart.dim))


def _kn_g(phi) -> CurvOp:
    return kulkarni_nomizu(phi, np.broadcast_to(_G, np.shape(phi)))


def _sigma2(phi):
    tr = np.trace(phi, axis1=-2, axis2=-1)
    return 0.5 * (tr ** 2 - np.einsum('...ab,...ba->...', phi, phi))


def _cyclic_sum(r: CurvOp) -> np.ndarray:
    t = r.to_tensor4()
    return (t + np.einsum('...bcad->...abcd', t)
            + np.einsum('...cabd->...abcd', t))


def _flip(frame: np.ndarray) -> np.ndarray:
    frame = frame.copy()
    frame[3] = -frame[3]
    return frame


# bivectors spanning omega_1 and the anti-self-dual forms; operators with
# values in their span commute with J1
_J1_BASIS = np.stack([
    OMEGA1 / np.sqrt(2.0),
    np.array([1.0, 0.0, 0.0, 0.0, 0.0, -1.0]) / np.sqrt(2.0),
    np.array([0.0, 1.0, 0.0, 0.0, 1.0, 0.0]) / np.sqrt(2.0),
    np.array([0.0, 0.0, 1.0, -1.0, 0.0, 0.0]) / np.sqrt(2.0)], axis=-1)


def _j1_invariant(rng: np.random.Generator) -> CurvOp:
    m = rng.uniform(-1.0, 1.0, (4, 4))
    return CurvOp(_J1_BASIS @ (m + m.T) @ _J1_BASIS.T)


def _zero_euler_phi(rng: np.random.Generator) -> np.ndarray:
    """Symmetric form with ``sigma2 = 0``: eigenvalues ``l1..l3`` and
    ``-(l1 l2 + l1 l3 + l2 l3)/(l1 + l2 + l3)``."""
    lam = rng.uniform(0.5, 1.5, 3)
    l4 = -(lam[0] * lam[1] + lam[0] * lam[2] + lam[1] * lam[2]) / lam.sum()
    q = random_frame(rng)
    return q.T @ np.diag(np.append(lam, l4)) @ q


def algebra_suite(cfg: ExperimentConfig) -> Report:
    s = _Suite('algebra', cfg, draws=cfg.get('draws', 10000))
    n = s.draws
    few = min(n, 200)

    # invariants of Id and *
    s.ref = '§2'
    inv_id = basic_invariants(IDENTITY)
    inv_star = basic_invariants(STAR)
    s.check('scalar(Id)', 's_Id = 12', inv_id.s, 12.0)
    s.gap('ricci(Id)', 'Ricci_Id = 3 g', inv_id.ricci - 3.0 * _G)
    s.gap('bianchi(Id)', 'b(Id) = 0', inv_id.bianchi.entries)
    s.gap('ricci(star)', 'Ricci_* = 0', inv_star.ricci)
    s.gap('bianchi(star)', 'b(*) = 3 *',
          (inv_star.bianchi - 3.0 * STAR).entries)
    s.check('t(star)', 't(*) = 3', inv_star.t, 3.0)
    standard = np.eye(4)
    s.ref = 'Eq (2.1)'
    s.check('k_isot(Id)', 'K_isot(Id) = 1',
            isotropic_sectional(IDENTITY, standard), 1.0)
    s.check('k_isot(star, +)', 'K_isot(*) = -1/2 on a positive frame',
            isotropic_sectional(STAR, standard), -0.5)
    s.check('k_isot(star, -)', 'K_isot(*) = +1/2 on a negative frame',
            isotropic_sectional(STAR, _flip(standard)), 0.5)
    planes = [sectional(IDENTITY, *g.standard_normal((2, 4)))
              for g in s.streams('planes', few)]
    s.gap('sectional(Id)', 'sigma_Id(P) = 1', np.array(planes) - 1.0,
          ref='§2')

    # table entries over random symmetric operators
    s.ref = 'Prop 2.1'
    r = random_symmetric(s.stream('symmetric'), n)
    inv = basic_invariants(r)
    eye = np.broadcast_to(_G, inv.ricci.shape)
    srs, comm = conjugations(r)
    s.gap('ricci(*R*)', 'Ricci_{*R*} = 1/2 s_R g - Ricci_R',
          ricci(srs) - (0.5 * inv.s[:, None, None] * eye - inv.ricci))
    t_g = inv.t[:, None, None] * eye
    s.gap('ricci(R*)', 'Ricci_{R*} = t(R) g', ricci(r @ STAR) - t_g)
    s.gap('ricci(*R)', 'Ricci_{*R} = t(R) g', ricci(STAR @ r) - t_g)
    s.gap('scalar(*R)', 's_{*R} = 4 t(R)', scalar(STAR @ r) - 4.0 * inv.t)
    s.gap('bianchi(*R - R*)', 'b(*R - R*) = 0', bianchi(comm).entries)
    s.gap('bianchi cyclic', 'b(R) equals the cyclic sum of R',
          _cyclic_sum(r) - inv.bianchi.to_tensor4(), ref='§2')
    k_gap, comm_gap = [], []
    for i, g in enumerate(s.streams('frames', few)):
        ri = r[i]
        frame = random_frame(g, 1 if i % 2 == 0 else -1)
        srs_i, comm_i = conjugations(ri)
        k_gap.append(isotropic_sectional(srs_i, frame)
                     - isotropic_sectional(ri, frame))
        expected = 0.5 * (sectional(ri, standard[2], standard[3])
                          - sectional(ri, standard[0], standard[1]))
        comm_gap.append(isotropic_sectional(comm_i, standard) - expected)
    s.gap('k_isot(*R*)', 'K_isot(*R*) = K_isot(R)', k_gap)
    s.gap('k_isot(*R - R*)',
          'K_isot(*R - R*) = 1/2 (sigma_34 - sigma_12) on the standard frame',
          comm_gap)

    # Kulkarni-Nomizu products
    s.ref = 'Lemma 4.1'
    phi = random_sym4(s.stream('phi'), n)
    xi = random_sym4(s.stream('xi'), n)
    tr_phi = np.trace(phi, axis1=-2, axis2=-1)
    tr_xi = np.trace(xi, axis1=-2, axis2=-1)
    pg, xg = _kn_g(phi), _kn_g(xi)
    s.gap('tr(phi.phi)', 'tr(phi . phi) = 2 sigma2(phi)',
          kulkarni_nomizu(phi, phi).trace() - 2.0 * _sigma2(phi))
    half_tr = 0.5 * tr_phi
    s.ref = 'Lemma 4.2'
    s.gap('(phi.g)++', '(phi . g) on L+ is 1/2 tr(phi) Id',
          (_P_PLUS @ pg @ _P_PLUS - _P_PLUS * half_tr).entries)
    s.gap('(phi.g)--', '(phi . g) on L- is 1/2 tr(phi) Id',
          (_P_MINUS @ pg @ _P_MINUS - _P_MINUS * half_tr).entries)
    s.gap('ricci(phi.g)', 'Ricci_{phi . g} = tr(phi) g + 2 phi',
          ricci(pg) - (tr_phi[:, None, None] * eye + 2.0 * phi))
    s.gap('tr(phi.g)', 'tr(phi . g) = 3 tr(phi)', pg.trace() - 3.0 * tr_phi)
    s.gap('<phi.g, xi.g>', '<phi . g, xi . g> = 2 <phi, xi> + tr phi tr xi',
          inner(pg, xg) - (2.0 * np.einsum('...ab,...ab->...', phi, xi)
                           + tr_phi * tr_xi))
    s.gap('<phi.g, *(xi.g)>', '<phi . g, *(xi . g)> = 0',
          inner(pg, STAR @ xg))
    gg = _kn_g(_G)
    s.gap('*(phi.g)*', '*(phi . g)* = 1/2 tr(phi) g . g - phi . g',
          (STAR @ pg @ STAR - (gg * half_tr - pg)).entries)
    s.gap('bianchi(phi.g)', 'b(phi . g) = 0', bianchi(pg).entries)

    s.ref = 'Lemma 4.3'
    b = random_bianchi(s.stream('bianchi'), n)
    inv_b = basic_invariants(b)
    pair = np.einsum('...ab,...ab->...', inv_b.ricci, phi)
    s.gap('<R, phi.g>', '<R, phi . g> = <Ricci_R, phi>', inner(b, pg) - pair)
    s.gap('<*R*, phi.g>', '<*R*, phi . g> = 1/2 s_R tr(phi) - <Ricci_R, phi>',
          inner(STAR @ b @ STAR, pg) - (0.5 * inv_b.s * tr_phi - pair))

    # decomposition
    s.ref = 'Prop 4.2'
    d = decompose(r)
    s.gap('reconstruction', 'r1 + r2 + r3+ + r3- + r4 = R',
          (d.reconstruct() - r).entries)
    parts = d.parts()
    cross = [inner(parts[i], parts[j])
             for i, j in itertools.combinations(range(5), 2)]
    s.gap('orthogonality', 'the five parts are mutually orthogonal', cross)
    idem = []
    for k, part in enumerate(parts):
        again = decompose(part).parts()
        for m, piece in enumerate(again):
            target = part if m == k else CurvOp(np.zeros_like(part.entries))
            idem.append(_worst((piece - target).entries))
    s.gap('idempotence', 'decomposing a part returns it in its own slot',
          idem)
    s.gap('r1 = b/3', 'r1 = b(R)/3', (d.r1 - inv.bianchi * (1.0 / 3.0)).entries)
    s.gap('r4 anti-commutes', '*r4* = -r4',
          (STAR @ d.r4 @ STAR + d.r4).entries)
    s.gap('r3 trace-free', 'tr(r3+) = tr(r3-) = 0',
          np.concatenate([d.r3p.trace(), d.r3m.trace()]))
    db = decompose(b)
    s.gap('bianchi kernel', 'R in the Bianchi kernel has r1 = 0',
          db.r1.entries)
    s.gap('decompose(Id)', 'decompose(Id) = (0, Id, 0, 0, 0)',
          (decompose(IDENTITY).r2 - IDENTITY).entries)
    s.gap('decompose(star)', 'decompose(*) = (*, 0, 0, 0, 0)',
          (decompose(STAR).r1 - STAR).entries)
    s.ref = 'Prop 4.1'
    phi0 = phi - (0.25 * tr_phi)[:, None, None] * eye
    p0g = _kn_g(phi0)
    s.gap('decompose(phi0.g)', 'trace-free phi0 . g lies in the r4 slot',
          (decompose(p0g).r4 - p0g).entries)

    # Weitzenbock operator
    s.ref = '§2'
    a = weitzenbock(r)
    s.gap('weitzenbock', 'closed form equals the four-argument definition',
          (a - weitzenbock_definition(r)).entries)
    s.gap('ricci(A(R))', 'Ricci_{A(R)} = s_R g',
          ricci(a) - inv.s[:, None, None] * eye)
    s.gap('bianchi(A(R))', 'b(A(R)) = 4 b(R)',
          (bianchi(a) - 4.0 * inv.bianchi).entries)
    s.gap('A(Id)', 'A(Id) = 4 Id', (weitzenbock(IDENTITY) - 4.0 * IDENTITY).entries)
    s.gap('A(star)', 'A(*) = 4 *', (weitzenbock(STAR) - 4.0 * STAR).entries)
    s.gap('A blocks', 'A(R) preserves L+ and L- for R in the Bianchi kernel',
          (_P_PLUS @ weitzenbock(b) @ _P_MINUS).entries)

    # characteristic forms
    s.ref = 'Def 2.1'
    g = CurvOp(s.stream('general').uniform(-1.0, 1.0, (n, 6, 6)))
    s.gap('euler basis sum', 'half trace pairing equals the basis sum',
          euler_form(g) - euler_basis_sum(g))
    s.gap('p1 basis sum', 'p1 pairing equals the basis sum',
          pontrjagin_form(g) - pontrjagin_basis_sum(g))
    s.gap('euler(R^T)', 'X(R^T) = X(R)', euler_form(g.T) - euler_form(g))
    s.gap('p1(R^T)', 'p1(R^T) - p1(R) = <R, *R - R*>/4pi^2',
          pontrjagin_form(g.T) - pontrjagin_form(g)
          - inner(g, STAR @ g - g @ STAR) / FOUR_PI2)
    s.check('euler(Id)', 'X(Id) = 3/4pi^2', euler_form(IDENTITY),
            3.0 / FOUR_PI2, 1e-12)
    s.check('p1(Id)', 'p1(Id) = 0', pontrjagin_form(IDENTITY), 0.0, 1e-12)

    m = min(n, 1000)
    bm, phim = b[:m], phi[:m]
    q = bm + _kn_g(phim)
    s.ref = 'Prop 4.3'
    s.gap('euler shift', '4pi^2 (X(R + phi . g) - X(R)) is the Euler shift',
          FOUR_PI2 * (euler_form(q) - euler_form(bm)) - euler_shift(bm, phim))
    s.gap('p1 shift', 'p1(R + phi . g) = p1(R)',
          pontrjagin_form(q) - pontrjagin_form(bm))
    s.ref = 'Prop 4.4'
    lam = s.stream('lambda').uniform(-1.0, 1.0, m)
    shifted = bm + STAR * lam
    s.gap('euler(R + l*)', '4pi^2 X(R + l *) = 4pi^2 X(R) + 3 l^2',
          FOUR_PI2 * (euler_form(shifted) - euler_form(bm)) - 3.0 * lam ** 2)
    s.gap('p1(R + l*)', '4pi^2 p1(R + l *) = 4pi^2 p1(R) + l s_R',
          FOUR_PI2 * (pontrjagin_form(shifted) - pontrjagin_form(bm))
          - lam * scalar(bm))
    s.ref = 'Remark 3'
    norms = norm_formulas(bm)
    s.gap('euler norms', '8pi^2 X = |R2|^2 + |R3|^2 - |R4|^2',
          norms['euler_lhs'] - norms['euler_rhs'])
    s.gap('p1 norms', '4pi^2 p1 = |W+|^2 - |W-|^2',
          norms['p1_lhs'] - norms['p1_rhs'])
    s.gap('euler(phi.g)', '4pi^2 X(phi . g) = 2 sigma2(phi)',
          FOUR_PI2 * euler_form(_kn_g(phim)) - 2.0 * _sigma2(phim),
          ref='Prop 4.3')

    k = min(n, 100)
    s.ref = 'Cor 4.1'
    zero = np.stack([_zero_euler_phi(g) for g in s.streams('zero euler', k)])
    candidates = np.concatenate([zero, phi[:k]])
    x_vals = np.abs(euler_form(_kn_g(candidates)))
    s2_vals = np.abs(_sigma2(candidates))
    mismatches = int(np.sum((x_vals <= 1e-12) != (s2_vals <= 1e-12)))
    s.gap('zero euler', 'X(phi . g) = 0 on constructed sigma2(phi) = 0',
          x_vals[:k], 1e-12)
    s.check('zero euler iff', 'X(phi . g) = 0 exactly when sigma2(phi) = 0',
            mismatches, 0.0, 0.5)

    # isotropic curvature and the r4 slot
    s.ref = 'Prop 4.1'
    r4_gap, pos_gap, sect_gap = [], [], []
    for i, g in enumerate(s.streams('isotropic frames', min(n, 20))):
        frames = [random_frame(g, 1 if j % 2 == 0 else -1)
                  for j in range(10)]
        member = p0g[i]
        r4_gap.extend(isotropic_sectional(member, f) for f in frames)
        others = b[i] - decompose(b[i]).r4
        pos_gap.append(max(abs(isotropic_sectional(others, f))
                           for f in frames))
        e = frames[0]
        sect_gap.append(sectional(member, e[0], e[1])
                        + sectional(member, e[2], e[3]))
    s.gap('k_isot(r4)', 'K_isot vanishes on trace-free phi0 . g', r4_gap)
    s.check('k_isot(not r4)',
            'K_isot does not vanish off the r4 slot (sampled planes)',
            sum(1 for v in pos_gap if v <= 1e-8), 0.0, 0.5)
    s.gap('sectional(r4)', 'sigma(P) = -sigma(P^perp) for phi0 . g', sect_gap)

    # Chern forms of J1-invariant operators
    c_gap, inv_gap = [], []
    s.ref = 'Def 2.2'
    for g in s.streams('j1 invariant', few):
        rj = _j1_invariant(g)
        inv_gap.append(invariance_defect(rj, J1))
        forms = chern_forms(rj, J1)
        c_gap.append(pontrjagin_form(rj)
                     - (c1_squared(forms) - 2.0 * forms.c2))
    s.gap('J-invariance', 'operators with values in <w1> + L- commute with J1',
          inv_gap)
    s.gap('p1 = c1^2 - 2 c2', 'p1(R) = c1 ^ c1 - 2 c2 for J-invariant R',
          c_gap)
    forms_id = chern_forms(IDENTITY, J1, with_c2=False)
    s.gap('ricci_J(Id)', 'Ricci_{J, Id} = w_J', forms_id.star_ricci - OMEGA1)
    s.check('s_J(Id)', 's_{J, Id} = 4', forms_id.s_J, 4.0)
    return s.report


def _conformal_charts(seed: int):
    return (flat_chart(4), stereographic_chart(4, half=1.0),
            random_poly_chart(seed=seed))


def conformal_suite(cfg: ExperimentConfig) -> Report:
    s = _Suite('conformal', cfg, draws=cfg.get('draws', 100))
    for chart in _conformal_charts(cfg.seed):
        f = random_poly(s.stream(f'f {chart.name}'), 0.3, 2)
        x = s.points(chart, s.draws)
        res = prop11_residual(chart, f, x)
        s.ref = 'Prop 1.1'
        s.gap(f'conformal euler ({chart.name})',
              'X(Q) = X(R) + div P(f) / 32pi^2', res['euler'], 1e-6)
        s.gap(f'conformal p1 ({chart.name})', 'p1(Q) = p1(R)', res['p1'], 1e-6)
        s.ref = 'Lemmas 5.1-5.3'
        for key, values in conformal_identities(chart, f, x).items():
            s.gap(f'{key} ({chart.name})', f'pointwise identity "{key}"',
                  values, 1e-6)

    flat = flat_chart(4)
    f_round = parse('log(4/(1 + r2)^2)', 4)
    x = s.points(flat, s.draws, 'round sphere')
    q = conformal_curvature(flat, f_round, x)
    scale = np.exp(-eval_value(f_round, x))
    s.ref = 'Eq (5.1)'
    s.gap('round sphere', 'e^{-f} Q = Id for f = log(4/(1 + r2)^2)',
          (q * scale - IDENTITY).entries, 1e-8)

    chart = random_poly_chart(seed=cfg.seed)
    f = random_poly(s.stream('rescaled f'), 0.3, 2)
    x = s.points(chart, s.draws, 'rescaled')
    rescaled = riemann_frame(chart.rescaled(exp(f)), x)
    q = conformal_curvature(chart, f, x) * np.exp(-eval_value(f, x))
    s.gap('rescaled chart', 'curvature of e^f g equals e^{-f} Q',
          (rescaled - q).entries, 1e-8)
    return s.report


_H = '1 + 0.2*x1^2 + 0.1*x3^2'


def transgression_suite(cfg: ExperimentConfig) -> Report:
    s = _Suite('transgression', cfg, draws=cfg.get('draws', 50))
    charts = _conformal_charts(cfg.seed)
    euler, p1, t_gap = [], [], []
    for i in range(s.draws):
        chart = charts[i % 3]
        delta = random_delta(seed=cfg.seed + i, scale=0.3)
        x = s.points(chart, 2, f'draw {i}')
        res = verify_prop71(chart, delta, x)
        euler.append(_worst(res['euler']))
        p1.append(_worst(res['p1']))
        t_gap.append(t_integral_defect(chart, delta, x[:1]))
    s.ref = 'Prop 7.1'
    s.gap('delta euler', "X(R') - X(R) + dT_euler = 0", euler, 1e-6)
    s.gap('delta p1', "p1(R') - p1(R) + dT_p1 = 0", p1, 1e-6)
    s.gap('t-integral', 'closed forms match the 64-node t-quadrature',
          t_gap, 1e-12, ref='Remark 4')

    chart = charts[2]
    f = random_poly(s.stream('gauge f'), 0.3, 2)
    x = s.points(chart, min(s.draws, 20), 'gauge')
    s.ref = 'Prop 8.1'
    gauge = gauge_delta(f)
    s.gap('gauge curvature', 'curvature of nabla + K_f equals Q',
          (modified_curvature(chart, gauge, x)
           - conformal_curvature(chart, f, x)).entries, 1e-8)
    res = verify_prop71(chart, gauge, x)
    s.gap('gauge euler', 'transgression of K_f closes the Euler change',
          res['euler'], 1e-6)
    s.gap('gauge p1', 'transgression of K_f closes the p1 change',
          res['p1'], 1e-6)

    bundle = rotation_map(_H, '0.3*x1 + 0.2*x4', '0.1*x2')
    for chart in charts[:2]:
        x = s.points(chart, s.draws)
        res = bundle_map_residual(chart, bundle, x)
        s.ref = 'Thm 1.1'
        s.gap(f'bundle map euler ({chart.name})',
              "X(R^E) = X(R) + div P(log h)/32pi^2 - dT'_euler",
              res['euler'], 1e-5)
        s.gap(f'bundle map p1 ({chart.name})', "p1(R^E) = p1(R) - dT'_p1",
              res['p1'], 1e-5)
        s.gap(f'bundle map consistency ({chart.name})',
              "X(R^E) equals the Euler density of S' on h g",
              res['consistency'], 1e-5)
        closed = closed_branch_residual(chart, _H, x)
        s.ref = 'Prop 8.1'
        s.gap(f'closed branch torsion ({chart.name})',
              'sqrt(h) Id with K_{log h} has a torsion-free delta',
              closed['torsion'], 1e-9)
        s.gap(f"closed branch S' ({chart.name})", "S' = 0 on the closed branch",
              closed['s_prime'], 1e-9)
        s.gap(f'closed branch euler ({chart.name})',
              'X(R^E) = X(R) + div P / 32pi^2', closed['euler'], 1e-5)
        s.gap(f'closed branch p1 ({chart.name})', 'p1(R^E) = p1(R)',
              closed['p1'], 1e-5)
    return s.report


def almostcx_suite(cfg: ExperimentConfig) -> Report:
    s = _Suite('almostcx', cfg, draws=cfg.get('draws', 50))
    j0 = make_acs('J1')
    stereo = stereographic_chart(4, half=1.0)
    conj = make_acs('conjugated', angle='0.4*x1 + 0.3*x2*x3')
    x = s.points(stereo, s.draws)

    d = validate_acs(stereo, conj, x)
    s.ref = '§2'
    s.gap('acs square', 'J^2 = -Id', d.square)
    s.gap('acs orthogonal', 'J is g-orthogonal', d.orthogonality)
    s.gap('acs positive', 'w_J is self-dual', d.anti_self_dual)
    e = eta_and_c1(stereo, conj, x)
    s.ref = 'Prop 3.1'
    s.gap('c1(E_J)', 'c1 from Ricci_J + eta equals the E_J curvature form',
          e.c1 - e.c1_bundle, 1e-7)
    s.gap('eta', 'eta = 1/2 Vol_E(nabla w, nabla w)', e.eta - e.eta_vol, 1e-8,
          ref='Eq (3.4)')
    s.gap('c1(E_J) fd', 'E_J curvature form against finite differences',
          e.c1_bundle - ec1_fd(stereo, conj, x), 1e-5)
    h = hermitian_delta(stereo, conj, x)
    s.ref = '§3'
    s.gap('hermitian parallel', 'the Hermitian connection parallelizes J',
          h.parallel_defect, 1e-8)
    s.gap('hermitian torsion', 'torsion of the Hermitian connection',
          h.torsion_defect, 1e-8)

    s.ref = 'Prop 9.3'
    s.gap('chern difference (stereoS4)', '4pi (c1(J1) - c1(J0)) = d(T~ + G)',
          chern_difference_residual(stereo, j0, conj, x), 1e-5)
    cor = chern_product_density(stereo, j0, conj, x)
    s.ref = 'Cor 9.1'
    s.gap('chern product (stereoS4)',
          'c1(J1) ^ c1(J0) = 1/2 (c1(J1)^2 + c1(J0)^2) - dU ^ dU / 32pi^2',
          cor['residual'], 1e-6)

    flat = flat_chart(4, half=0.5)
    quat = make_acs('quaternion', a='0.3*x1 + 0.2*x3', b='-0.3*x2 - 0.2*x4')
    xf = s.points(flat, s.draws)
    s.ref = 'Prop 9.3'
    s.gap('chern difference (flat4)', '4pi (c1(J1) - c1(J0)) = d(T~ + G)',
          chern_difference_residual(flat, j0, quat, xf), 1e-5)
    dens = thm12_densities(flat, j0, quat, xf)
    s.ref = 'Thm 1.2'
    s.gap('anti-complex', 'nabla H is anti-complex for anti-holomorphic a + ib',
          dens['anti_complex_defect'], 1e-8)
    s.gap('angle chain', 'div((T~ J0)^#) = lap(cos - log(1 + cos))',
          dens['chain_residual'], 1e-6)

    bi = biaxial_chart()
    xb = s.points(bi, s.draws)
    s.ref = '§3'
    for key, values in kahler_identities(bi, j0, xb).items():
        s.gap(f'{key} (biaxial4)', f'Kahler identity "{key}"', values, 1e-8)
    kah = chern_product_density(bi, j0, j0, xb)
    s.ref = 'Cor 9.1'
    s.gap('p1(L+) (biaxial4)', 'p1 + 2 X = c1^2 for a Kahler structure',
          kah['p1_plus'] - kah['c1_squared_0'], 1e-8)
    return s.report


def _rotation8(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((8, 8)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0.0:
        q[:, 0] = -q[:, 0]
    return q


def _shared_at_most_one() -> np.ndarray:
    sets = [set(q) for q in QUADS]
    return np.array([[len(a & b) <= 1 for b in sets] for a in sets])


def quat8_suite(cfg: ExperimentConfig) -> Report:
    s = _Suite('quat8', cfg, draws=cfg.get('draws', 100))
    n = s.draws
    s.ref = '§11'
    omega = fundamental_form(standard_triple())
    s.check('|Omega|^2', '|Omega|^2 = 10/3', float(omega @ omega),
            OMEGA_NORM2, 1e-12)
    s.gap('self-dual', '*Omega = Omega', hodge8(omega) - omega, 1e-12)
    outside = 0
    for g in s.streams('rotations', min(n, 20)):
        q = _rotation8(g)
        if not in_T(rotate_form(omega, q))['member']:
            outside += 1
        if not in_T(fundamental_form(hk_from_split(q[:4])))['member']:
            outside += 1
    s.check('membership', 'rotated and split fundamental forms lie in T',
            outside, 0.0, 0.5)

    s.ref = 'Eqs (11.2)-(11.5)'
    worst_cos = 0.0
    frame_gaps = {}
    for c in np.linspace(0.0, 1.0, n):
        fc = frame_construction(zeta=float(np.arccos(c)))
        worst_cos = max(worst_cos, abs(fc.checks['cos_theta']
                                       - (7.0 + 8.0 * c * c) / 15.0))
        for key, value in fc.checks.items():
            if key not in ('cos_theta', 'cos_theta_expected'):
                frame_gaps[key] = max(frame_gaps.get(key, 0.0), value)
    s.check('cos theta', 'cos theta = (7 + 8 c^2)/15', worst_cos, 0.0, 1e-12)
    for key, value in sorted(frame_gaps.items()):
        s.check(f'frame {key}', f'frame construction identity "{key}"',
                value, 0.0)
    s.ref = '§11'
    fc = frame_construction(zeta=np.pi / 4)
    ang = angle8(fc.omega0, fc.omega1)
    s.check('h_tilde norm', '|H~|^2 = 10/3 sin^2 theta', ang.h_norm2,
            ang.norm_10_3, 1e-9)
    s.ref = 'Prop 11.3'
    broken = sum(
        1 for t in np.linspace(0.0, 1.0, 11)
        if not in_T(homotopy_omega(zeta=np.pi / 3, t=float(t)))['member'])
    s.check('homotopy', 'Omega_t stays in T', broken, 0.0, 0.5)

    s.ref = 'Lemma 11.1'
    sym = []
    for g in s.streams('curvatures', n):
        r8 = random_curvature8(g)
        a, b = g.standard_normal((2, 70))
        sym.append(weitzenbock4(r8, a) @ b - a @ weitzenbock4(r8, b))
    s.gap('A symmetric', "<A(Omega), Omega'> = <Omega, A(Omega')>", sym)
    mask = _shared_at_most_one()
    zeros, mats = [], []
    for g in s.streams('matrices', min(n, 5)):
        mat = weitzenbock4_matrix(random_curvature8(g))
        zeros.append(_worst(mat[mask]))
        mats.append(_worst(mat - mat.T))
    s.gap('A classes', '<A(e^I), e^J> = 0 when I and J share at most one '
          'index', zeros)
    s.gap('A matrix', 'the matrix of A is symmetric', mats)
    s.gap('A constant curvature', 'A = -16 k Id on 4-forms for curvature k',
          weitzenbock4_matrix(constant_curvature8(1.0)) + 16.0 * np.eye(70))
    return s.report


SUITES: Mapping[str, Callable[[ExperimentConfig], Report]] = {
    'algebra': algebra_suite,
    'conformal': conformal_suite,
    'transgression': transgression_suite,
    'almostcx': almostcx_suite,
    'quat8': quat8_suite,
}


def run_suite(name: str, cfg: Optional[ExperimentConfig] = None) -> Report:
    try:
        suite = SUITES[name]
    except KeyError:
        raise WorkbenchError(
            WorkbenchErrorCode.UnknownName,
            f'Unknown suite "{name}": valid names are '
            f'{", ".join(sorted(SUITES))}.') from None
    cfg = cfg or ExperimentConfig(kind='verify', name=name)
    report = suite(cfg)
    summary = report.summary()
    _LOG.info('suite %s: %d checks, %d passed, %d failed', name,
              summary['checks'], summary['passed'], summary['failed'])
    return report
