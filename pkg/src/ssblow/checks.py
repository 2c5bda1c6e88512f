"""Cross-cutting verification campaigns and report generation.

All sampled checks draw parity-respecting random trigonometric/rational
fields from a seeded generator, so reports are bit-reproducible given
(seed, grids, config).  Exact operator identities use a 1e-10 slack; the
refinement-convergent claims carry their own documented tolerances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import angular as ang
from . import biot_savart as bsv
from . import model as mdl
from .fields import (EVEN_EVEN, EVEN_ODD, ODD_ODD, AngularField, Field2D,
                     StateTriple, D_theta, D_z_radial, project_mean)
from .grids import RadialGrid, ThetaGrid, radial_grid, theta_grid

__all__ = [
    "CheckReport", "run_suite", "convergence_study", "inner_B",
    "coercivity_B_sample", "random_state", "BConstants", "DEFAULT_B_CONSTANTS",
    "report_to_text",
]

EXACT_SLACK = 1e-10


@dataclass(frozen=True)
class CheckReport:
    name: str
    samples: int
    worst_margin: float
    constant_measured: float
    grid_levels: list
    passed: bool
    slack: float = EXACT_SLACK

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "worst_margin": self.worst_margin,
            "constant_measured": self.constant_measured,
            "grid_levels": [[int(a), float(b)] for a, b in self.grid_levels],
            "pass": self.passed,
            "slack": self.slack,
        }


# ---------------------------------------------------------------------------
# random fields
# ---------------------------------------------------------------------------

def random_radial(rg: RadialGrid, rng: np.random.Generator, degree: int = 3,
                  decay: int = 1) -> np.ndarray:
    """s(1-s)^decay x random polynomial: vanishes at z = 0, decays at tail."""
    coefs = rng.standard_normal(degree + 1)
    return rg.s * rg.om**decay * np.polyval(coefs, rg.s)


def random_state(rg: RadialGrid, tg: ThetaGrid, rng: np.random.Generator,
                 n_modes: int = 5) -> StateTriple:
    """Parity-correct random smooth state, amplitude-normalized."""
    vo = np.zeros((rg.n_z, tg.n_theta))
    vp = np.zeros_like(vo)
    for m in range(1, n_modes + 1):
        vo += np.outer(random_radial(rg, rng), np.sin(2 * m * tg.nodes)) / m**2
        vp += np.outer(random_radial(rg, rng), np.cos(2 * m * tg.nodes)) / m**2
    vp -= (2.0 / np.pi) * (vp @ tg.quadrature_weights)[:, None]
    vp[0] = 0.0
    p0 = random_radial(rg, rng)
    f = StateTriple(
        Field2D(rg, tg, vo, ODD_ODD, 1),
        p0,
        Field2D(rg, tg, vp, EVEN_EVEN, 1),
    )
    nrm = mdl.state_norm(f)
    return f * (1.0 / nrm) if nrm > 0 else f


# ---------------------------------------------------------------------------
# the B inner product of the low-order dissipativity estimate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BConstants:
    """Searched constants of the D and B inner products.

    The estimates only assert existence of workable constants; these values
    come from a coordinate search on sampled quotients and are recorded in
    run manifests.  a and m parametrize the interior weight of the D form.
    """

    D: tuple = (1.0, 1.0, 1.0, 1.0)
    B: tuple = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    a: float = 1.0
    m: int = 4

    def __post_init__(self):
        if min(self.D) <= 0 or min(self.B) <= 0:
            raise ValueError("inner-product constants must be positive")


DEFAULT_B_CONSTANTS = BConstants()


def _pair_of_slices(tg: ThetaGrid, v1: np.ndarray, v3: np.ndarray) -> ang.AngularPair:
    return ang.AngularPair(
        AngularField(tg, v1, EVEN_EVEN), AngularField(tg, v3, EVEN_EVEN)
    )


def _inner_C_tilde(f: ang.AngularPair, g: ang.AngularPair,
                   gamma_star: ang.AngularPair,
                   consts: ang.CoercivityConstants) -> float:
    """(P_S f, P_S g)_C + c(f) c(g): the nonnegative extension off S."""
    I_star = ang.invariant_I(gamma_star)
    cf = ang.invariant_I(f) / I_star
    cg = ang.invariant_I(g) / I_star
    fp = f - gamma_star * cf
    gp = g - gamma_star * cg
    return ang.inner_C(fp, gp, consts) + cf * cg


def _batched_C_tilde(tg: ThetaGrid, F1, F3, G1, G3, gamma_star, consts,
                     weights_z: np.ndarray) -> float:
    """sum_z w(z) * (f(z,.), g(z,.))_C-tilde over the radial rows."""
    total = 0.0
    for i in np.nonzero(weights_z)[0]:
        fp = _pair_of_slices(tg, F1[i], F3[i])
        gp = _pair_of_slices(tg, G1[i], G3[i])
        total += weights_z[i] * _inner_C_tilde(fp, gp, gamma_star, consts)
    return total


def _smooth_step(x: np.ndarray) -> np.ndarray:
    y = np.clip(x, 0.0, 1.0)
    return y * y * (3.0 - 2.0 * y)


def inner_D(gf: "mdl.GoodTriple", gg: "mdl.GoodTriple",
            gamma_star: ang.AngularPair,
            consts: BConstants = DEFAULT_B_CONSTANTS,
            cc: ang.CoercivityConstants = ang.DEFAULT_COERCIVITY_CONSTANTS) -> float:
    """The radial|angular composite form on transformed triples.

    D1: C-tilde form of the z-slopes at 0; D2: interior window with the
    (f/z - slope) remainder; D3: z^{-m} cutoff weight; D4: plain dz.
    """
    rg, tg = gf.rgrid, gf.tgrid
    D1, D2, D3, D4 = consts.D
    z = rg.nodes
    row0 = rg.d_s[0] / rg.L

    s1f, s3f = row0 @ gf.g1.values, row0 @ gf.g2.values
    s1g, s3g = row0 @ gg.g1.values, row0 @ gg.g2.values
    val = D1 * _inner_C_tilde(_pair_of_slices(tg, s1f, s3f),
                              _pair_of_slices(tg, s1g, s3g), gamma_star, cc)

    # remainder (f/z - slope at 0), finite at z = 0
    def rem(vals, slope):
        out = np.empty_like(vals)
        out[1:] = vals[1:] / z[1:, None] - slope[None, :]
        out[0] = 0.0
        return out

    r1f, r3f = rem(gf.g1.values, s1f), rem(gf.g2.values, s3f)
    r1g, r3g = rem(gg.g1.values, s1g), rem(gg.g2.values, s3g)

    def rem_p0(p, rgrid):
        out = np.empty_like(p)
        out[1:] = p[1:] / z[1:]
        out[0] = float(rgrid.d_s[0] @ p) / rgrid.L
        return out

    w2 = rg.w_z.copy()
    w2[1:] *= _smooth_step(1.0 - z[1:] / consts.a) / z[1:] ** 2
    w2[0] = 0.0
    p2f, p2g = rem_p0(gf.p0, rg), rem_p0(gg.p0, rg)
    val += D2 * (float(w2 @ (gf.p0 * gg.p0 / np.maximum(z, 1e-300) ** 2
                             * (z > 0)))
                 + _batched_C_tilde(tg, r1f, r3f, r1g, r3g, gamma_star, cc, w2))
    del p2f, p2g

    chi = _smooth_step((z - 0.5 * consts.a) / (0.5 * consts.a))
    w3 = rg.w_z * chi / np.maximum(z, 1e-300) ** consts.m
    w3[0] = 0.0
    val += D3 * (float(w3 @ (gf.p0 * gg.p0))
                 + _batched_C_tilde(tg, gf.g1.values, gf.g2.values,
                                    gg.g1.values, gg.g2.values,
                                    gamma_star, cc, w3))
    w4 = rg.w_z
    val += D4 * (float(w4 @ (gf.p0 * gg.p0))
                 + _batched_C_tilde(tg, gf.g1.values, gf.g2.values,
                                    gg.g1.values, gg.g2.values,
                                    gamma_star, cc, w4))
    return val


def inner_B(f: StateTriple, g: StateTriple,
            gamma_star: ang.AngularPair | None = None,
            consts: BConstants = DEFAULT_B_CONSTANTS) -> float:
    """Weighted form on states: transformed D-block plus direct blocks with
    the (1+z)^2/z^2 radial measure and cos^{1/2} first-derivative terms."""
    rg, tg = f.rgrid, f.tgrid
    if gamma_star is None:
        gamma_star = ang.ground_state(tg.n_theta).gamma_star
    B = consts.B
    z = rg.nodes
    wzz = rg.w_z.copy()
    wzz[1:] *= (1.0 + z[1:]) ** 2 / z[1:] ** 2
    wzz[0] = 0.0
    w_th = tg.quadrature_weights
    w_half = tg.quadrature_weights * np.sqrt(tg.cos_theta)

    val = B[0] * inner_D(mdl.transform_B(f), mdl.transform_B(g),
                         gamma_star, consts)
    val += B[1] * float(wzz @ ((f.omega0.values * g.omega0.values) @ w_th))
    val += B[2] * float(wzz @ (f.p0 * g.p0))
    val += B[3] * float(wzz @ (D_z_radial(rg, f.p0) * D_z_radial(rg, g.p0)))
    mf = (2.0 / np.pi) * (f.p1.values @ w_th)
    mg = (2.0 / np.pi) * (g.p1.values @ w_th)
    val += B[4] * float(wzz @ (mf * mg))
    val += B[5] * float(wzz @ ((f.p1.values * g.p1.values) @ w_th))
    from .fields import d_theta
    df1, dg1 = d_theta(f.omega0).values, d_theta(g.omega0).values
    df3, dg3 = d_theta(f.p1).values, d_theta(g.p1).values
    val += B[6] * float(wzz @ ((df1 * dg1) @ w_half))
    val += B[7] * float(wzz @ ((df3 * dg3) @ w_half))
    return val


def _project_scriptS(f: StateTriple, profile: mdl.ProfileAlpha0) -> StateTriple:
    """Push a sample into the discrete dissipativity subspace: p0(0) = 0 by
    construction of the samples; the angular slope condition is removed
    along the kernel direction."""
    kernel = mdl.z_dz(profile.state)
    tg = f.tgrid
    num = ang.invariant_I(mdl._bar_slice_pair(tg, mdl.transform_B(f)))
    den = ang.invariant_I(mdl._bar_slice_pair(tg, mdl.transform_B(kernel)))
    return f - (num / den) * kernel


def coercivity_B_sample(n: int, n_theta: int = 64, n_z: int = 120,
                        z_max: float = 50.0, seed: int = 0,
                        consts: BConstants = DEFAULT_B_CONSTANTS) -> float:
    """Min sampled Rayleigh quotient of f + z dz f + scrL_local f in the B
    form over the discrete dissipativity subspace."""
    rg, tg = radial_grid(n_z, z_max), theta_grid(n_theta)
    profile = mdl.profile_alpha0(n_theta, n_z, z_max)
    gs = ang.ground_state(n_theta).gamma_star
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n):
        f = _project_scriptS(random_state(rg, tg, rng), profile)
        Lf = f + mdl.z_dz(f) + mdl.apply_scrL_local(f, profile)
        den = inner_B(f, f, gs, consts)
        if den <= 0:
            raise ValueError("B form not positive on a sample")
        worst = min(worst, inner_B(Lf, f, gs, consts) / den)
    return worst


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------

def _report(name, samples, margin, constant, levels, passed, slack=EXACT_SLACK):
    return CheckReport(name, samples, float(margin), float(constant),
                       levels, bool(passed), slack)


def run_suite(config: dict | None = None) -> list[CheckReport]:
    """Deterministic verification campaign; see DEFAULT_SUITE_CONFIG."""
    default_checks = ["identities", "invariant", "profile", "kernel",
                      "elliptic", "hardy", "coercivity", "exponents"]
    if config is None:
        config = {"checks": default_checks}
    checks = config.get("checks")
    if checks is None:
        # an empty config is an empty (passing) report
        checks = default_checks if config else []
    if not checks:
        return []
    n_theta = int(config.get("n_theta", 128))
    n_z = int(config.get("n_z", 240))
    z_max = float(config.get("z_max", 50.0))
    seed = int(config.get("seed", 0))
    rng = np.random.default_rng(seed)
    rg, tg = radial_grid(n_z, z_max), theta_grid(n_theta)
    reports: list[CheckReport] = []

    if "identities" in checks:
        profile = mdl.profile_alpha0(n_theta, n_z, z_max)
        worst_split = worst_pol = worst_bw = worst_bnm = worst_k = 0.0
        n_samp = int(config.get("identity_samples", 20))
        for _ in range(n_samp):
            f = random_state(rg, tg, rng)
            g = random_state(rg, tg, rng)
            split = mdl.state_norm(
                mdl.apply_scrL(f, profile)
                - (mdl.apply_scrL_local(f, profile)
                   + mdl.apply_scrL_nonlocal(f, profile)))
            pol = mdl.state_norm(
                mdl.apply_scrL(f, profile)
                - (mdl.nonlinear_N(f + profile.state, f + profile.state)
                   - mdl.nonlinear_N(f, f)
                   - mdl.nonlinear_N(profile.state, profile.state)))
            bf = mdl.transform_B(f)
            bw = mdl.apply_BW(f)
            ref = mdl.GoodTriple(
                bf.g1.with_values(2 * D_theta(bf.g1).values + 4 * bf.g1.values),
                -bf.p0,
                bf.g2.with_values(2 * D_theta(bf.g2).values + 7 * bf.g2.values))
            bw_err = mdl.good_norm(bw - ref)
            bnm = mdl.check_B_N_M(f)
            alpha = 0.05
            k1, k2 = mdl.nonlinear_K(f, g, alpha)
            nt = mdl.nonlinear_N_tilde(f, g, alpha)
            et = mdl.error_terms_Etilde(f, g, alpha)
            m2 = (2.0 / np.pi) * (k2 @ tg.quadrature_weights)
            kerr = max(
                mdl.weighted_norm(rg, tg, k1 - nt.omega0.values - alpha * et.omega0.values),
                mdl.weighted_norm_radial(rg, m2 - nt.p0 - alpha * et.p0),
                mdl.weighted_norm(rg, tg, (k2 - m2[:, None])
                                  - alpha * nt.p1.values - alpha**2 * et.p1.values))
            worst_split = max(worst_split, split)
            worst_pol = max(worst_pol, pol)
            worst_bw = max(worst_bw, bw_err)
            worst_bnm = max(worst_bnm, bnm)
            worst_k = max(worst_k, kerr)
        reports.append(_report("split_local_nonlocal", n_samp,
                               1e-12 - worst_split, worst_split, [],
                               worst_split <= 1e-12, 1e-12))
        reports.append(_report("polarization", n_samp, 1e-10 - worst_pol,
                               worst_pol, [], worst_pol <= 1e-10))
        reports.append(_report("BW_identity", n_samp, 1e-9 - worst_bw,
                               worst_bw, [], worst_bw <= 1e-9, 1e-9))
        reports.append(_report("BN_equals_MB", n_samp, 1e-8 - worst_bnm,
                               worst_bnm, [], worst_bnm <= 1e-8, 1e-8))
        reports.append(_report("K_consistency", n_samp, 1e-9 - worst_k,
                               worst_k, [], worst_k <= 1e-9, 1e-9))

    if "invariant" in checks:
        G0 = ang.seed_pair(tg)
        d130 = abs(ang.invariant_drift(130.0, G0, 10.0))
        d140 = abs(ang.invariant_drift(140.0, G0, 10.0))
        ok = d130 <= 1e-6 and d140 >= 1e-3
        reports.append(_report("invariant_drift", 2, 1e-6 - d130, d130, [],
                               ok, 1e-6))

    if "profile" in checks:
        profile = mdl.profile_alpha0(n_theta, n_z, z_max)
        res = mdl.steady_residual_alpha0(profile.state)
        l12 = abs(bsv.L12_total(profile.state.omega0) - 4.0)
        p0p1 = float(np.max(np.abs(
            (2.0 / np.pi) * (profile.state.p1.values @ tg.quadrature_weights))))
        ok = res <= 1e-6 and l12 <= 1e-6 and p0p1 <= 1e-10
        reports.append(_report("profile_identities", 3,
                               1e-6 - max(res, l12), max(res, l12, p0p1), [],
                               ok, 1e-6))

    if "kernel" in checks:
        profile = mdl.profile_alpha0(n_theta, n_z, z_max)
        rep = mdl.kernel_report(profile)
        ok = (rep["kernel_residual"] <= 1e-6
              and rep["profile_frakL_norm"] >= 0.1 * rep["profile_norm"])
        reports.append(_report("kernel", 2, 1e-6 - rep["kernel_residual"],
                               rep["kernel_residual"], [], ok, 1e-6))

    if "elliptic" in checks:
        n_samp = int(config.get("elliptic_samples", 25))
        worst = 0.0
        Dz, _ = bsv._dz_matrices(rg)
        for alpha in (0.1, 0.5, 1.0, 2.0):
            for _ in range(n_samp):
                f2 = random_radial(rg, rng, decay=2)
                psi = bsv.solve_second_shell(rg, f2, alpha)
                d1 = Dz @ psi
                d2 = Dz @ d1
                num = (alpha * math.sqrt(float(rg.w_z @ d1**2))
                       + alpha**2 * math.sqrt(float(rg.w_z @ d2**2)))
                worst = max(worst, num / math.sqrt(float(rg.w_z @ f2**2)))
        levels = []
        for lev, (ntl, nzl) in enumerate(((n_theta // 2, n_z // 2),
                                          (3 * n_theta // 4, 3 * n_z // 4),
                                          (n_theta, n_z))):
            rgl, tgl = radial_grid(nzl, z_max), theta_grid(ntl)
            rng_l = np.random.default_rng(seed + 1)
            vals = np.zeros((rgl.n_z, tgl.n_theta))
            for m in range(1, 7):
                vals += np.outer(random_radial(rgl, rng_l),
                                 np.sin(2 * m * tgl.nodes)) / m**2
            Fx = Field2D(rgl, tgl, vals, ODD_ODD, 1)
            levels.append((ntl, bsv.elliptic_estimate_constant(Fx, 0.05)))
        c_vals = [c for _, c in levels]
        stable = max(c_vals) <= 1.5 * min(c_vals)
        ok = worst <= 4.0 and stable
        reports.append(_report("elliptic_estimates", 4 * n_samp,
                               4.0 - worst, worst, levels, ok, 0.0))

    if "hardy" in checks:
        rep = bsv.hardy_checks(int(config.get("hardy_samples", 1000)),
                               n_theta, seed)
        reports.append(_report("hardy", rep["n_samples"], rep["margin_plain"],
                               rep["max_ratio_plain"], [], rep["pass"], 0.0))

    if "coercivity" in checks:
        q_theta = ang.coercivity_sample(int(config.get("coercivity_samples", 100)),
                                        n_theta=n_theta, seed=seed)
        q_B = coercivity_B_sample(int(config.get("coercivity_B_samples", 40)),
                                  n_theta=min(n_theta, 64),
                                  n_z=min(n_z, 120), seed=seed)
        ok = q_theta >= 0.01 and q_B >= 0.005
        reports.append(_report("coercivity", 2, min(q_theta - 0.01,
                                                    q_B - 0.005),
                               min(q_theta, q_B), [], ok, 0.0))

    if "exponents" in checks:
        gs = ang.ground_state(n_theta)
        e1 = ang.singular_exponent_fit(gs.gamma_star.g1)
        e2 = ang.singular_exponent_fit(gs.gamma_star.g2)
        ok = abs(e1 - 1.5) <= 0.05 and abs(e2 - 2.25) <= 0.05
        reports.append(_report("regularity_exponents", 2,
                               0.05 - max(abs(e1 - 1.5), abs(e2 - 2.25)),
                               e1, [], ok, 0.05))

    return reports


def convergence_study(check_name: str, levels: list[tuple[int, int]],
                      z_max: float = 50.0) -> CheckReport:
    """Value per refinement level plus a fitted order for a named check."""
    values = []
    if check_name == "steady_residual_alpha0":
        for nt, nz in levels:
            p = mdl.profile_alpha0(nt, nz, z_max)
            values.append((nt, mdl.steady_residual_alpha0(p.state)))
        vals = [v for _, v in values]
        passed = all(v <= 1e-6 for v in vals) and (
            vals[-1] <= vals[0] or vals[-1] <= 1e-7)
        worst = max(vals)
    elif check_name == "quadrature_sin2sq":
        for nt, _ in levels:
            tg = theta_grid(nt)
            err = abs(float(tg.quadrature_weights @ tg.sin2**2) - np.pi / 4.0)
            values.append((nt, err))
        worst = max(v for _, v in values)
        passed = worst <= 1e-12
    elif check_name == "exponent_gamma1":
        for nt, _ in levels:
            gs = ang.ground_state(nt)
            values.append((nt, ang.singular_exponent_fit(gs.gamma_star.g1)))
        finest = [v for _, v in values[-2:]]
        passed = all(abs(v - 1.5) <= 0.05 for v in finest)
        worst = max(abs(v - 1.5) for v in finest)
    else:
        raise ValueError(f"unknown check name: {check_name}")
    return CheckReport(check_name, len(levels), float(-worst), float(worst),
                       values, bool(passed), 0.0)


def report_to_text(reports: list[CheckReport]) -> str:
    lines = []
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] {r.name}: worst={r.constant_measured:.3e} "
                     f"margin={r.worst_margin:.3e} samples={r.samples}")
        for lev, val in r.grid_levels:
            lines.append(f"         level n={lev}: {val:.6e}")
    return "\n".join(lines)


def reports_to_json(reports: list[CheckReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1, sort_keys=True)
