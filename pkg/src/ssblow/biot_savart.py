"""Nonlocal radial integrals and the elliptic stream-function solves.

The sin(2 theta) shell of the stream function satisfies a degenerate radial
ODE (no zeroth-order term); all other sine shells diagonalize the operator

    alpha^2 Dz^2 + 4 alpha Dz + dtheta^2 + 4

into banded radial problems.  The radial tail integrals close int_z^inf
with the extrapolated tail of the mapped grid, so profile-type integrands
(polynomial in s = z/(1+z)) are integrated without truncation error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fields import (EVEN_EVEN, ODD_ODD, Field2D, Parity, d_theta,
                     project_P1, project_P1_coefficient, project_P2)
from .grids import RadialGrid, ThetaGrid, theta_grid

__all__ = [
    "StreamSplit", "L12", "L12_total", "L_loc", "L_good",
    "solve_psi1_alpha0", "psi0_expansion", "psi0_radial_factor",
    "solve_second_shell", "solve_BSLaw", "stream_T", "hardy_checks",
    "elliptic_estimate_constant", "sine_modes",
]

ALPHA_MAX = 2.0
ALPHA0_DEFAULT = 0.1


@dataclass(frozen=True, eq=False)
class StreamSplit:
    """Stream function split into the sin(2 theta) shell and its complement."""

    psi0: Field2D
    psi1: Field2D
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= ALPHA_MAX:
            raise ValueError("alpha outside [0, 2]")


# ---------------------------------------------------------------------------
# radial integral operators
# ---------------------------------------------------------------------------

def _sigma(F: Field2D) -> np.ndarray:
    """(1/pi) int_0^{2pi} F sin(2 theta) dtheta as a radial array."""
    return project_P1_coefficient(F)


def _inv_z_integrand(rg: RadialGrid, sigma: np.ndarray) -> np.ndarray:
    """sigma(z)/z dz as an s-integrand, with the z = 0 limit one-sided."""
    g = np.empty_like(sigma)
    g[1:] = sigma[1:] / (rg.s[1:] * rg.om[1:])
    g[0] = float(rg.d_s[0] @ sigma)   # sigma(0) = 0, limit = d sigma/ds
    return g


def L12(F: Field2D) -> np.ndarray:
    """z -> int_z^inf (1/pi s) int F sin(2 theta) dtheta ds, tail included."""
    if F.vanish_order_z0 < 1:
        raise ValueError("L12 requires vanish_order_z0 >= 1")
    rg = F.rgrid
    g = _inv_z_integrand(rg, _sigma(F))
    total = float(rg.total_s @ g + rg.tail_row @ g)
    return total - rg.cum_s @ g


def L12_total(F: Field2D) -> float:
    """The full integral int_0^inf; equals L12 at z = 0."""
    rg = F.rgrid
    g = _inv_z_integrand(rg, _sigma(F))
    return float(rg.total_s @ g + rg.tail_row @ g)


def L_loc(F: Field2D) -> np.ndarray:
    """Local counterpart -int_0^z (same integrand); L12 = L12_total + L_loc."""
    if F.vanish_order_z0 < 1:
        raise ValueError("L_loc requires vanish_order_z0 >= 1")
    rg = F.rgrid
    g = _inv_z_integrand(rg, _sigma(F))
    return -(rg.cum_s @ g)


def L_good(G: Field2D) -> np.ndarray:
    """2 int_z^inf (1/z') slashed-mean(G) dz' on a good-unknown component."""
    if G.vanish_order_z0 < 1:
        raise ValueError("L_good requires vanish_order_z0 >= 1")
    rg, tg = G.rgrid, G.tgrid
    mean = (2.0 / np.pi) * (G.values @ tg.quadrature_weights)
    g = 2.0 * _inv_z_integrand(rg, mean)
    total = float(rg.total_s @ g + rg.tail_row @ g)
    return total - rg.cum_s @ g


def L_good_loc(G: Field2D) -> np.ndarray:
    """-2 int_0^z (1/z') slashed-mean(G) dz' (local form on good unknowns)."""
    rg, tg = G.rgrid, G.tgrid
    mean = (2.0 / np.pi) * (G.values @ tg.quadrature_weights)
    g = 2.0 * _inv_z_integrand(rg, mean)
    return -(rg.cum_s @ g)


# ---------------------------------------------------------------------------
# angular sine-mode transforms
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def sine_modes(tg: ThetaGrid, n_modes: int):
    """Synthesis/analysis matrices for sin(2m theta), m = 1..n_modes."""
    m = np.arange(1, n_modes + 1)
    synth = np.sin(2.0 * np.outer(tg.nodes, m))
    anal = (4.0 / np.pi) * (synth * tg.quadrature_weights[:, None]).T
    return synth, anal


def _sine_analysis(F: Field2D, n_modes: int) -> np.ndarray:
    synth, anal = sine_modes(F.tgrid, n_modes)
    return F.values @ anal.T


def solve_psi1_alpha0(F: Field2D, n_modes: int | None = None) -> Field2D:
    """(dtheta^2 + 4)^{-1} applied to F minus its sin(2 theta) shell.

    Shell-wise division by (4 - 4 m^2) over the even sine frequencies; the
    m = 1 shell is projected out first.
    """
    if F.parity != ODD_ODD:
        raise ValueError("solve_psi1_alpha0 expects odd/odd parity")
    tg = F.tgrid
    M = n_modes or tg.n_theta // 4
    a = _sine_analysis(F, M)
    a[:, 0] = 0.0                          # remove the degenerate shell
    m = np.arange(1, M + 1)
    div = 4.0 - 4.0 * m * m
    div[0] = 1.0
    psi = a / div
    psi[:, 0] = 0.0
    synth, _ = sine_modes(tg, M)
    out = psi @ synth.T
    coef = project_P1_coefficient(F.with_values(out))
    if np.max(np.abs(coef)) > 1e-6 * max(np.max(np.abs(out)), 1e-30):
        warnings.warn("residual sin(2 theta) content after psi1 solve; re-projecting")
        out = out - np.outer(coef, tg.sin2)
    return F.with_values(out)


def sine_coefficients(F: Field2D, n_modes: int | None = None) -> np.ndarray:
    """Radial arrays of the even sine-mode coefficients of an odd/odd field."""
    M = n_modes or F.tgrid.n_theta // 4
    return _sine_analysis(F, M)


# ---------------------------------------------------------------------------
# the sin(2 theta) shell
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _dz_matrices(rg: RadialGrid):
    Dz = rg.mult_Dz[:, None] * rg.d_s
    return Dz, Dz @ Dz


def psi0_radial_factor(omega0: Field2D, alpha: float,
                       with_r1: bool = True) -> np.ndarray:
    """Radial factor of the sin(2 theta) stream shell.

    -1/4 [ int_z^inf rho/s ds + int_0^z (s/z)^{4/alpha} rho/s ds ];
    the second (R_1) term solves alpha Dz U + 4 U = alpha rho and is
    obtained from that ODE directly, which is uniformly accurate in alpha.
    """
    if alpha < 0.0:
        raise ValueError("alpha <= 0 with the R1 term requested")
    rg = omega0.rgrid
    rho = project_P1_coefficient(omega0)
    g = _inv_z_integrand(rg, rho)
    T = float(rg.total_s @ g + rg.tail_row @ g) - rg.cum_s @ g
    if alpha == 0.0 or not with_r1:
        return -0.25 * T
    Dz, _ = _dz_matrices(rg)
    A = alpha * Dz + 4.0 * np.eye(rg.n_z)
    U = np.linalg.solve(A, alpha * rho)
    return -0.25 * (T + U)


def psi0_expansion(omega0: Field2D, alpha: float) -> Field2D:
    """Stream shell Psi_0 = psi0_radial_factor * sin(2 theta)."""
    if alpha < 0.0 or alpha > ALPHA_MAX:
        raise ValueError("alpha outside [0, 2]")
    fac = psi0_radial_factor(omega0, alpha)
    vals = np.outer(fac, omega0.tgrid.sin2)
    return omega0.with_values(vals, parity=ODD_ODD, vanish_order_z0=0)


def solve_second_shell(rg: RadialGrid, F2: np.ndarray, alpha: float) -> np.ndarray:
    """Solve alpha^2 Dz^2 psi + 4 alpha Dz psi = F2, Dirichlet at 0 and z_max.

    Solved through w = Dz psi (first-order in w, regular at z = 0), then
    psi = -int_z^inf w dz'/z'.  Both Dirichlet values hold up to the
    discretization error; a direct second-order solve would put a one-cell
    boundary layer at z_max because the operator has no zeroth-order term.
    """
    if not 0.0 < alpha <= ALPHA_MAX:
        raise ValueError("alpha outside (0, 2]")
    Dz, _ = _dz_matrices(rg)
    A = alpha * alpha * Dz + 4.0 * alpha * np.eye(rg.n_z)
    w = np.linalg.solve(A, np.asarray(F2, dtype=float))
    g = _inv_z_integrand(rg, w)
    # psi(0) = 0 exactly; psi(z_max) equals the total integral of w/z,
    # which vanishes for the true two-sided Dirichlet solution
    return rg.cum_s @ g


def solve_BSLaw(F: Field2D, alpha: float, n_modes: int | None = None) -> Field2D:
    """Solve alpha^2 Dz^2 Psi + 4 alpha Dz Psi + dtheta^2 Psi + 4 Psi = F.

    Sine-shell diagonalization in theta with banded solves in z and zero
    Dirichlet data at z in {0, z_max}.  At alpha = 0 the degenerate
    sin(2 theta) shell follows the leading-order stream convention
    (-1/4 L12 sin 2theta) and the rest reduces to the theta-only solve.
    """
    if F.parity != ODD_ODD:
        raise ValueError("solve_BSLaw expects odd/odd parity")
    if alpha < 0.0 or alpha > ALPHA_MAX:
        raise ValueError("alpha outside [0, 2]")
    tg, rg = F.tgrid, F.rgrid
    M = n_modes or tg.n_theta // 2
    a = _sine_analysis(F, M)
    psi = np.zeros_like(a)
    if alpha == 0.0:
        m = np.arange(2, M + 1)
        psi[:, 1:] = a[:, 1:] / (4.0 - 4.0 * m * m)
        if F.vanish_order_z0 >= 1:
            shell = F.with_values(np.outer(a[:, 0], tg.sin2),
                                  vanish_order_z0=F.vanish_order_z0)
            psi[:, 0] = psi0_radial_factor(shell, 0.0)
        elif np.max(np.abs(a[:, 0])) > 0:
            raise ValueError("alpha = 0 with a sin(2 theta) shell needs "
                             "vanish_order_z0 >= 1 for the tail integral")
    else:
        Dz, Dz2 = _dz_matrices(rg)
        base = alpha * alpha * Dz2 + 4.0 * alpha * Dz
        eye = np.eye(rg.n_z)
        psi[:, 0] = solve_second_shell(rg, a[:, 0], alpha)
        for j in range(1, M):
            m = j + 1
            A = base + (4.0 - 4.0 * m * m) * eye
            b = a[:, j].copy()
            A = A.copy()
            A[0, :] = 0.0
            A[0, 0] = 1.0
            b[0] = 0.0
            A[-1, :] = 0.0
            A[-1, -1] = 1.0
            b[-1] = 0.0
            try:
                psi[:, j] = np.linalg.solve(A, b)
            except np.linalg.LinAlgError as exc:
                cond = np.linalg.cond(A)
                raise RuntimeError(
                    f"ill-conditioned shell solve (m={m}, cond={cond:.2e})"
                ) from exc
    synth, _ = sine_modes(tg, M)
    return F.with_values(psi @ synth.T, vanish_order_z0=0)


# ---------------------------------------------------------------------------
# the combined stream multiplier 2 tan(theta) Psi~ + dtheta Psi~
# ---------------------------------------------------------------------------

def stream_T(omega0: Field2D) -> np.ndarray:
    """2 tan(theta) Psi~_1 + dtheta Psi~_1 through variation of parameters.

    With Psi~ = A(theta) sin 2theta + B(theta) cos 2theta the combination
    collapses to 2A - 2 tan(theta) B, where A and B are cumulative integrals
    of the source against cos/sin(2 theta); no modal truncation enters, so
    profile-grade (C^{1/2} at pi/2) vorticities are handled at full accuracy.
    Returns raw (n_z, n_theta) values.
    """
    tg = omega0.tgrid
    vals = omega0.values
    coef = project_P1_coefficient(omega0)
    g = vals - np.outer(coef, tg.sin2)          # P1-complement source
    jac = tg.dtheta_ds
    # A_p = 1/2 int_0^theta g cos2t, B-tail = 1/2 int_theta^{pi/2} g sin2t
    integ_c = g * (tg.cos2 * jac)[None, :]
    A_p = 0.5 * (integ_c @ tg.cum_s.T)
    integ_s = g * (tg.sin2 * jac)[None, :]
    # B(theta) = -cum/2 = B_tail - tot/2 with tot = O(roundoff) by the
    # quadrature-consistent shell projection; the right-cumulative matrix
    # keeps the tail RELATIVELY accurate, so the tan(theta) factor cannot
    # amplify a flat noise floor near pi/2
    B_tail = 0.5 * (integ_s @ tg.cumR_s.T)
    w_sin = tg.quadrature_weights * tg.sin2
    psi_p = A_p * tg.sin2[None, :] + B_tail * tg.cos2[None, :]
    A0 = -(4.0 / np.pi) * (psi_p @ w_sin)   # orthogonality to the shell
    return 2.0 * (A0[:, None] + A_p) - 2.0 * tg.tan_theta[None, :] * B_tail


# ---------------------------------------------------------------------------
# inequality sampling
# ---------------------------------------------------------------------------

def hardy_checks(n_samples: int, n_theta: int = 128, seed: int = 0) -> dict:
    """Sample the two endpoint Hardy inequalities on fields vanishing at pi/2.

    The plain inequality ||f|| <= 4 ||cos(theta) f'|| is exact; the weighted
    one holds with the 2/3 constant up to a fitted lower-order constant.
    """
    tg = theta_grid(n_theta)
    rng = np.random.default_rng(seed)
    w = tg.quadrature_weights
    ratios = np.empty(n_samples)
    fitted_C = np.empty(n_samples)
    n_modes = 10
    m = np.arange(n_modes + 1)
    basis = np.cos(2.0 * np.outer(tg.nodes, m))
    for i in range(n_samples):
        coef = rng.standard_normal(n_modes + 1) / (1.0 + m) ** 2
        f = tg.cos_theta * (basis @ coef)
        df = (tg.d_s @ f) / tg.dtheta_ds
        norm_f = math.sqrt(float(w @ f**2))
        norm_cdf = math.sqrt(float(w @ (tg.cos_theta * df) ** 2))
        ratios[i] = norm_f / norm_cdf
        lhs = float(w @ (f**2 * tg.cos_theta**-2.5))
        main = (2.0 / 3.0) * float(w @ (df**2 * tg.cos_theta**-0.5))
        h1 = float(w @ (f**2 + df**2))
        fitted_C[i] = max(0.0, (lhs - main) / h1)
    return {
        "n_samples": n_samples,
        "max_ratio_plain": float(np.max(ratios)),
        "margin_plain": float(np.min(4.0 - ratios)),
        "fitted_C_weighted": float(np.max(fitted_C)),
        "pass": bool(np.max(ratios) <= 4.0),
    }


def elliptic_estimate_constant(F: Field2D, alpha: float,
                               n_modes: int | None = None) -> float:
    """Measured constant of the weighted full-law estimate.

    (||P2perp dtheta^2 Psi|| + ||P2perp dtheta Psi|| + alpha ||Dz dtheta Psi||
     + alpha^2 ||Dz^2 Psi||) / ||F|| in the (1+z)^2/z^2 x cos^{-1/2} measure.
    Theta derivatives are taken mode-exactly on the sine representation of
    the solve (the raw collocation second derivative amplifies roundoff at
    the clustered pi/2 nodes).
    """
    tg, rg = F.tgrid, F.rgrid
    M = n_modes or tg.n_theta // 4
    psi = solve_BSLaw(F, alpha, n_modes=M)
    a_psi = _sine_analysis(psi, M)
    m = np.arange(1, M + 1)
    synth, _ = sine_modes(tg, M)
    cos_synth = np.cos(2.0 * np.outer(tg.nodes, m))
    dth = (2.0 * m * a_psi) @ cos_synth.T
    dthth_perp = (-4.0 * m * m * a_psi)[:, 1:] @ synth[:, 1:].T
    dth_perp = dth - np.outer((2.0 * a_psi[:, 0]), tg.cos2)  # drop the shell
    Dz, Dz2 = _dz_matrices(rg)
    dz_dth = Dz @ dth
    dz2 = Dz2 @ psi.values

    w_th = tg.quadrature_weights * tg.cos_theta**-0.5
    w_zz = rg.w_z.copy()
    w_zz[1:] = w_zz[1:] * (1.0 + rg.nodes[1:]) ** 2 / rg.nodes[1:] ** 2
    w_zz[0] = 0.0

    def wnorm(vals):
        return math.sqrt(float(w_zz @ ((vals**2) @ w_th)))

    num = (wnorm(dthth_perp) + wnorm(dth_perp)
           + alpha * wnorm(dz_dth) + alpha**2 * wnorm(dz2))
    den = wnorm(F.values)
    return num / den
