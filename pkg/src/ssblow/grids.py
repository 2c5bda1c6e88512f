"""Angular and radial grids with their differentiation/quadrature operators.

Angular direction: Chebyshev-Gauss collocation in a computational variable
s in (0, 1), composed with the quadratic end-map

    theta(s) = pi/2 - (pi/2) * (1 - s)**2,

so the distance to pi/2 is u = (pi/2)*(1-s)**2.  Functions that behave like
u**(3/2) or u**(9/4) at theta = pi/2 become (1-s)**3 / (1-s)**4.5 in s, which
global polynomial collocation resolves; there is no parity extension across
pi/2 (the stencils are intrinsically one-sided at the ends).

Radial direction: uniform grid in s = z/(L+z) covering [0, z_max], with
finite-difference derivatives and composite high-order quadrature.  Integrals
of the form int_z^inf are closed with a small extrapolated tail beyond z_max
(exact for integrands polynomial in s, zero for compactly supported data).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "ThetaGrid",
    "RadialGrid",
    "theta_grid",
    "radial_grid",
    "HALF_PI",
]

HALF_PI = np.pi / 2.0


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _cos_table(n: int, m_max: int) -> np.ndarray:
    """cos(m t_j) for m = 0..m_max with exact integer angle reduction."""
    J = 2 * np.arange(n, dtype=np.int64)[:, None] + 1
    m = np.arange(m_max + 1)
    M = (J * m[None, :]) % (4 * n)
    return np.cos((np.pi / (2.0 * n)) * M)


def _cumulative_basis(n: int, t: np.ndarray) -> np.ndarray:
    """E[j, k] = int_0^{s_j} cos(k tau(s')) ds' for s = sin^2(t/2).

    Closed forms from cos(k tau) sin(tau) product-to-sum; exact per mode.
    """
    C = _cos_table(n, n)
    E = np.zeros((n, n))
    E[:, 0] = np.sin(t / 2.0) ** 2
    if n > 1:
        E[:, 1] = np.sin(t) ** 2 / 4.0
    for k in range(2, n):
        E[:, k] = 0.25 * (
            (1.0 - C[:, k + 1]) / (k + 1) - (1.0 - C[:, k - 1]) / (k - 1)
        )
    return E


def _total_basis(n: int) -> np.ndarray:
    """int_0^1 cos(k tau(s)) ds per mode k (value of the antiderivative at t=pi)."""
    tot = np.zeros(n)
    tot[0] = 1.0
    for k in range(2, n, 2):
        tot[k] = -1.0 / (k * k - 1.0)
    return tot


def _sin_m_half(n: int, m: np.ndarray, num: np.ndarray) -> np.ndarray:
    """sin(m * pi * num/(4n)) with exact integer reduction mod 8n."""
    M = (m[None, :] * num[:, None]) % (8 * n)
    return np.sin((np.pi / (4.0 * n)) * M)


def _right_cumulative_basis(n: int, t: np.ndarray) -> np.ndarray:
    """E_R[j, k] = int_{s_j}^1 cos(k tau(s)) ds, evaluated to RELATIVE
    accuracy near s = 1.

    cos(m t_j) - cos(m pi) is computed as a product of sines of exactly
    reduced angles, so the entries vanish like (1 - s_j) without
    cancellation noise; tail integrals multiplied by tan(theta)-type
    factors stay clean at the pi/2 end.
    """
    j = np.arange(n)
    num_plus = 2 * n + (2 * j + 1)        # (pi + t_j) * (2n/pi)
    num_minus = 2 * n - (2 * j + 1)       # (pi - t_j) * (2n/pi)
    m_all = np.arange(n + 1)
    Sp = _sin_m_half(n, m_all, num_plus)
    Sm = _sin_m_half(n, m_all, num_minus)
    delta = 2.0 * Sp * Sm                 # cos(m t_j) - cos(m pi)
    E_R = np.zeros((n, n))
    E_R[:, 0] = np.cos(t / 2.0) ** 2      # 1 - s_j
    if n > 1:
        E_R[:, 1] = -np.sin(t) ** 2 / 4.0
    for k in range(2, n):
        E_R[:, k] = 0.25 * (delta[:, k + 1] / (k + 1) - delta[:, k - 1] / (k - 1))
    return E_R


def _invariant_mode_integrals(n: int) -> np.ndarray:
    """m_k = int_0^1 (T_k'(s) - T_k'(0))/s * (s cot theta(s)) ds per mode.

    Equals int (X - X(0))/gamma^2 dgamma on mode k after integration by
    parts; the (T_k' - T_k'(0))/s factor is polynomial, the cot factor is
    analytic, so dense Gauss-Legendre integrates the product to roundoff.
    This gives an exactly linear representation of the conserved integral.
    """
    n_gl = 4 * n + 32
    x_gl, w_gl = np.polynomial.legendre.leggauss(n_gl)
    s = 0.5 * (x_gl + 1.0)            # s in (0, 1)
    w_s = 0.5 * w_gl
    theta = HALF_PI * s * (2.0 - s)   # theta(s), exact at both ends
    h = s * np.cos(theta) / np.sin(theta)      # s cot(theta), analytic
    x = 1.0 - 2.0 * s                 # Chebyshev argument
    # T_k'(s) = -2 k U_{k-1}(x); T_k'(0) = -2 k^2
    m = np.zeros(n)
    u_prev = np.ones_like(x)          # U_0
    u_curr = 2.0 * x                  # U_1
    for k in range(1, n):
        if k == 1:
            U = u_prev
        elif k == 2:
            U = u_curr
        else:
            u_prev, u_curr = u_curr, 2.0 * x * u_curr - u_prev
            U = u_curr
        core = (-2.0 * k * U + 2.0 * k * k) / s   # (T_k'(s) - T_k'(0))/s
        m[k] = float(w_s @ (core * h))
    return m


@dataclass(frozen=True, eq=False)
class ThetaGrid:
    """Collocation grid on (0, pi/2), open at both ends.

    ``nodes`` are the angles, ``quadrature_weights`` integrate dtheta over
    [0, pi/2], ``gamma_nodes`` hold gamma = tan(theta).  The remaining arrays
    are precomputed operator data shared by the field operations.
    """

    n_theta: int
    nodes: np.ndarray
    quadrature_weights: np.ndarray
    gamma_nodes: np.ndarray
    # computational variable and map data
    s: np.ndarray
    om: np.ndarray          # 1 - s, computed in closed form
    u: np.ndarray           # pi/2 - theta = (pi/2) * om^2
    dtheta_ds: np.ndarray   # theta'(s) = pi * om
    # trig tables (stable near pi/2 through u)
    sin_theta: np.ndarray
    cos_theta: np.ndarray
    tan_theta: np.ndarray
    cot_theta: np.ndarray
    sin2: np.ndarray        # sin(2 theta)
    cos2: np.ndarray        # cos(2 theta)
    cos_sq: np.ndarray      # cos^2(theta)
    sec_sq: np.ndarray      # 1/cos^2(theta)
    # spectral operators (dense, n x n)
    analysis: np.ndarray    # values -> cos(k t) coefficients
    synthesis: np.ndarray   # coefficients -> values
    d_s: np.ndarray         # d/ds collocation matrix
    d_theta_mat: np.ndarray  # d/dtheta collocation matrix
    D_theta_mat: np.ndarray  # sin(2 theta) d/dtheta
    cum_s: np.ndarray       # values -> cumulative int_0^{s_j} . ds
    cumR_s: np.ndarray      # values -> tail integral int_{s_j}^1 . ds
    total_s: np.ndarray     # values -> int_0^1 . ds (row vector)
    w_gamma: np.ndarray     # quadrature weights for int_0^inf . dgamma
    w_bar_gamma2: np.ndarray  # exact linear row: int_0^inf (X - X(0))/gamma^2 dgamma

    def __post_init__(self):
        if self.n_theta < 8:
            raise ValueError("n_theta must be at least 8")

    def weights_for(self, extra: np.ndarray) -> np.ndarray:
        """Quadrature weights for int_0^{pi/2} F(theta) extra(theta) dtheta."""
        return self.quadrature_weights * extra


@lru_cache(maxsize=32)
def theta_grid(n_theta: int) -> ThetaGrid:
    n = int(n_theta)
    j = np.arange(n)
    t = (2.0 * j + 1.0) * np.pi / (2.0 * n)
    s = np.sin(t / 2.0) ** 2
    om = np.cos(t / 2.0) ** 2          # 1 - s without cancellation
    u = HALF_PI * om * om
    theta = HALF_PI - u
    dtheta_ds = np.pi * om

    sin_u = np.sin(u)
    cos_u = np.cos(u)
    sin_theta = cos_u
    cos_theta = sin_u
    tan_u = np.tan(u)
    tan_theta = 1.0 / tan_u
    cot_theta = tan_u
    sin2 = np.sin(2.0 * u)             # sin(2 theta) = sin(pi - 2u) = sin(2u)
    cos2 = -np.cos(2.0 * u)            # cos(2 theta) = -cos(2u)
    cos_sq = sin_u * sin_u
    sec_sq = 1.0 / cos_sq

    # cos(k t_j) with k t_j = pi k(2j+1)/(2n): reduce the argument by exact
    # integer arithmetic mod 4n so matrix entries are accurate to an ulp of
    # a bounded angle (naive evaluation leaves systematic O(n eps) entry
    # errors that repeated derivative chains amplify)
    k = np.arange(n)
    J = 2 * np.arange(n, dtype=np.int64)[:, None] + 1       # (2j+1) column
    M = (J * k[None, :]) % (4 * n)
    ang = (np.pi / (2.0 * n)) * M
    S = np.cos(ang)                                # synthesis: cos(k t_j)
    A = (2.0 / n) * S.T.copy()                     # analysis (exact inverse)
    A[0, :] *= 0.5

    T1 = -k[None, :] * np.sin(ang)                 # d/dt of basis
    d_t = T1 @ A
    d_s = (2.0 / np.sin(t))[:, None] * d_t
    d_theta_mat = (1.0 / dtheta_ds)[:, None] * d_s
    # sin(2 theta)/theta'(s) is smooth and vanishing at both ends
    mult = sin2 / dtheta_ds
    D_theta_mat = mult[:, None] * d_s

    E = _cumulative_basis(n, t)
    cum_s = E @ A
    cumR_s = _right_cumulative_basis(n, t) @ A
    total_s = _total_basis(n) @ A

    w_theta = total_s * dtheta_ds                  # int F dtheta = int F theta' ds
    dgamma_ds = sec_sq * dtheta_ds                 # gamma = tan theta
    w_gamma = total_s * dgamma_ds
    w_bar_gamma2 = _invariant_mode_integrals(n) @ A

    return ThetaGrid(
        n_theta=n,
        nodes=_freeze(theta),
        quadrature_weights=_freeze(w_theta),
        gamma_nodes=_freeze(tan_theta),
        s=_freeze(s),
        om=_freeze(om),
        u=_freeze(u),
        dtheta_ds=_freeze(dtheta_ds),
        sin_theta=_freeze(sin_theta),
        cos_theta=_freeze(cos_theta),
        tan_theta=_freeze(tan_theta),
        cot_theta=_freeze(cot_theta),
        sin2=_freeze(sin2),
        cos2=_freeze(cos2),
        cos_sq=_freeze(cos_sq),
        sec_sq=_freeze(sec_sq),
        analysis=_freeze(A),
        synthesis=_freeze(S),
        d_s=_freeze(d_s),
        d_theta_mat=_freeze(d_theta_mat),
        D_theta_mat=_freeze(D_theta_mat),
        cum_s=_freeze(cum_s),
        cumR_s=_freeze(cumR_s),
        total_s=_freeze(total_s),
        w_gamma=_freeze(w_gamma),
        w_bar_gamma2=_freeze(w_bar_gamma2),
    )


# ---------------------------------------------------------------------------
# radial grid
# ---------------------------------------------------------------------------

def _fd_weights(x: np.ndarray, x0: float, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at x0 from nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for kk in range(mn, 0, -1):
                    c[i, kk] = c1 * (kk * c[i - 1, kk - 1] - c5 * c[i - 1, kk]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for kk in range(mn, 0, -1):
                c[j, kk] = (c4 * c[j, kk] - kk * c[j, kk - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _fd_matrix(x: np.ndarray, order: int) -> np.ndarray:
    """Dense d/dx matrix, (order+1)-point stencils, one-sided near the ends."""
    n = len(x)
    p = order + 1
    D = np.zeros((n, n))
    half = order // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - p)
        idx = np.arange(lo, lo + p)
        D[i, idx] = _fd_weights(x[idx], x[i], 1)
    return D


def _cum_matrix(x: np.ndarray, order: int) -> np.ndarray:
    """Matrix C with (C v)_j = int_{x_0}^{x_j} interp(v); exact to degree `order`."""
    n = len(x)
    p = order + 1
    C = np.zeros((n, n))
    half = order // 2
    for i in range(n - 1):
        lo = min(max(i - half + 1, 0), n - p)
        idx = np.arange(lo, lo + p)
        xi = x[idx]
        # integrate Lagrange basis over [x_i, x_{i+1}] by Gauss-Legendre
        gx, gw = np.polynomial.legendre.leggauss((p + 1) // 2 + 1)
        a, b = x[i], x[i + 1]
        pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
        wts = 0.5 * (b - a) * gw
        for m, jm in enumerate(idx):
            lag = np.ones_like(pts)
            for q in range(p):
                if q != m:
                    lag *= (pts - xi[q]) / (xi[m] - xi[q])
            C[i + 1, jm] += lag @ wts
    return np.cumsum(C, axis=0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Grid on z in [0, z_max] graded by the algebraic map z = L s/(1-s).

    ``s`` is uniform on [0, s_max]; derivative and cumulative operators act in
    s.  ``tail_row`` integrates the quadratic extrapolant of an s-integrand
    over (s_max, 1], closing int_z^inf integrals across the truncation point.
    """

    n_z: int
    z_max: float
    L: float
    map: str
    nodes: np.ndarray
    s: np.ndarray
    om: np.ndarray                 # 1 - s
    d_s: np.ndarray                # d/ds FD matrix
    mult_Dz: np.ndarray            # s(1-s): z d/dz = s(1-s) d/ds
    cum_s: np.ndarray              # cumulative int_0^{s_j} . ds
    total_s: np.ndarray            # int_0^{s_max} . ds row
    tail_row: np.ndarray           # int_{s_max}^{1} extrapolated . ds row
    w_z: np.ndarray                # weights for int_0^{z_max} . dz
    dz_ds: np.ndarray

    def __post_init__(self):
        if self.n_z < 16:
            raise ValueError("n_z must be at least 16")
        if self.z_max < 50.0:
            raise ValueError("z_max must be >= 50")


@lru_cache(maxsize=32)
def radial_grid(n_z: int, z_max: float = 50.0, L: float = 1.0,
                fd_order: int = 6) -> RadialGrid:
    n = int(n_z)
    z_max = float(z_max)
    L = float(L)
    s_max = z_max / (L + z_max)
    s = np.linspace(0.0, s_max, n)
    om = 1.0 - s
    z = L * s / om

    d_s = _fd_matrix(s, fd_order)
    cum_s = _cum_matrix(s, fd_order)
    total_s = cum_s[-1].copy()

    # quadratic extrapolation of the integrand through the last three nodes,
    # integrated exactly over (s_max, 1]
    x3 = s[-3:]
    h = 1.0 - s_max
    gx, gw = np.polynomial.legendre.leggauss(3)
    pts = s_max + 0.5 * h * (gx + 1.0)
    wts = 0.5 * h * gw
    tail = np.zeros(n)
    for m in range(3):
        lag = np.ones_like(pts)
        for q in range(3):
            if q != m:
                lag *= (pts - x3[q]) / (x3[m] - x3[q])
        tail[n - 3 + m] = lag @ wts

    dz_ds = L / om**2
    w_z = total_s * dz_ds

    return RadialGrid(
        n_z=n,
        z_max=z_max,
        L=L,
        map="algebraic",
        nodes=_freeze(z),
        s=_freeze(s),
        om=_freeze(om),
        d_s=_freeze(d_s),
        mult_Dz=_freeze(s * om),
        cum_s=_freeze(cum_s),
        total_s=_freeze(total_s),
        tail_row=_freeze(tail),
        w_z=_freeze(w_z),
        dz_ds=_freeze(dz_ds),
    )
