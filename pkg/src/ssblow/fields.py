"""Parity-aware field containers and the shared differential/projection ops.

Angular fields live on a ThetaGrid, 2-D fields on a (RadialGrid, ThetaGrid)
pair.  Derivatives in theta are evaluated in the computational variable with
fused multipliers (e.g. sin(2 theta)/theta'(s)), which keeps the operators
accurate at the clustered nodes next to pi/2 where 1/theta'(s) alone would
amplify roundoff.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .grids import RadialGrid, ThetaGrid, radial_grid, theta_grid

__all__ = [
    "Parity", "AngularField", "Field2D", "StateTriple", "GoodTriple",
    "EVEN_EVEN", "ODD_ODD", "EVEN_ODD", "ODD_EVEN",
    "d_theta", "D_theta", "D_z", "D_z_radial", "cos2_d_theta",
    "project_mean", "project_P0", "project_P1", "project_P2",
    "project_P0_perp", "project_P1_coefficient",
    "integrate_theta_from0", "cumulative_theta_values", "theta_total",
    "save_field2d", "load_field2d",
]

EVEN = "even"
ODD = "odd"


@dataclass(frozen=True)
class Parity:
    """Symmetry class at theta = 0 and theta = pi/2.

    A field extends to the full circle by even/odd reflection at both axes;
    the classes below are closed under the operators used here.
    """

    at_zero: str
    at_half_pi: str

    def __post_init__(self):
        if self.at_zero not in (EVEN, ODD) or self.at_half_pi not in (EVEN, ODD):
            raise ValueError(f"invalid parity {self.at_zero}/{self.at_half_pi}")

    def flipped(self) -> "Parity":
        f = {EVEN: ODD, ODD: EVEN}
        return Parity(f[self.at_zero], f[self.at_half_pi])

    @property
    def label(self) -> str:
        return f"{self.at_zero}/{self.at_half_pi}"


EVEN_EVEN = Parity(EVEN, EVEN)
ODD_ODD = Parity(ODD, ODD)
EVEN_ODD = Parity(EVEN, ODD)
ODD_EVEN = Parity(ODD, EVEN)


def _dcoeffs_ds_arr(a: np.ndarray) -> np.ndarray:
    """Chebyshev derivative recurrence along the last axis (s = (1-x)/2).

    b_{k-1} = b_{k+1} + 2k a_k, vectorized as reversed parity-split
    cumulative sums; exact on the interpolant.
    """
    n = a.shape[-1]
    w = 2.0 * np.arange(n) * a
    # b[i] = sum of w[j] over j > i with opposite parity
    rev_odd = np.cumsum(w[..., 1::2][..., ::-1], axis=-1)[..., ::-1]
    rev_even = np.cumsum(w[..., 0::2][..., ::-1], axis=-1)[..., ::-1]
    b = np.zeros_like(a)
    even_view = b[..., 0::2]          # b[2m] = rev_odd[m]
    take = min(even_view.shape[-1], rev_odd.shape[-1])
    even_view[..., :take] = rev_odd[..., :take]
    odd_view = b[..., 1::2]           # b[2m+1] = rev_even[m+1]
    take = min(odd_view.shape[-1], rev_even.shape[-1] - 1)
    if take > 0:
        odd_view[..., :take] = rev_even[..., 1:1 + take]
    b[..., 0] *= 0.5
    return -2.0 * b


def _wdtheta(tg: ThetaGrid, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
    """(mult / theta'(s)) * d/ds along the theta axis, in coefficient space.

    The dense derivative matrix carries O(n^2)-sized boundary rows whose
    roundoff compounds under repeated application; the coefficient
    recurrence is exact on the interpolant and keeps its noise flat.
    """
    a = values @ tg.analysis.T
    # floor the roundoff tail so chained derivatives do not compound it;
    # the genuine coefficients of resolved fields sit far above this level
    cap = np.max(np.abs(a), axis=-1, keepdims=True)
    a = np.where(np.abs(a) < 1e-15 * cap, 0.0, a)
    dv = _dcoeffs_ds_arr(a) @ tg.synthesis.T
    return dv * (mult / tg.dtheta_ds)


@dataclass(frozen=True, eq=False)
class AngularField:
    grid: ThetaGrid
    values: np.ndarray
    parity: Parity

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_theta,):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values in AngularField")
        object.__setattr__(self, "values", v)

    def with_values(self, v: np.ndarray, parity: Parity | None = None) -> "AngularField":
        return AngularField(self.grid, v, parity or self.parity)

    def __add__(self, other: "AngularField") -> "AngularField":
        if other.parity != self.parity:
            raise ValueError("parity mismatch in field addition")
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "AngularField") -> "AngularField":
        if other.parity != self.parity:
            raise ValueError("parity mismatch in field subtraction")
        return self.with_values(self.values - other.values)

    def __mul__(self, c: float) -> "AngularField":
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "AngularField":
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class Field2D:
    rgrid: RadialGrid
    tgrid: ThetaGrid
    values: np.ndarray
    parity: Parity
    vanish_order_z0: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.rgrid.n_z, self.tgrid.n_theta):
            raise ValueError("values shape does not match grids")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values in Field2D")
        if self.vanish_order_z0 >= 1 and np.any(v[0] != 0.0):
            raise ValueError("vanish_order_z0 >= 1 requires a zero first row")
        object.__setattr__(self, "values", v)

    def with_values(self, v: np.ndarray, parity: Parity | None = None,
                    vanish_order_z0: int | None = None) -> "Field2D":
        return Field2D(
            self.rgrid, self.tgrid, v,
            parity or self.parity,
            self.vanish_order_z0 if vanish_order_z0 is None else vanish_order_z0,
        )

    def __add__(self, other: "Field2D") -> "Field2D":
        if other.parity != self.parity:
            raise ValueError("parity mismatch in field addition")
        return self.with_values(
            self.values + other.values,
            vanish_order_z0=min(self.vanish_order_z0, other.vanish_order_z0),
        )

    def __sub__(self, other: "Field2D") -> "Field2D":
        if other.parity != self.parity:
            raise ValueError("parity mismatch in field subtraction")
        return self.with_values(
            self.values - other.values,
            vanish_order_z0=min(self.vanish_order_z0, other.vanish_order_z0),
        )

    def __mul__(self, c: float) -> "Field2D":
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Field2D":
        return self.with_values(-self.values)


@dataclass(frozen=True, eq=False)
class StateTriple:
    """(Omega_0, P_0, P_1): vorticity amplitude, radial background, angular
    temperature correction.  P_0 depends on z only."""

    omega0: Field2D
    p0: np.ndarray
    p1: Field2D

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        if p0.shape != (self.omega0.rgrid.n_z,):
            raise ValueError("p0 must be a radial array")
        object.__setattr__(self, "p0", p0)

    @property
    def rgrid(self) -> RadialGrid:
        return self.omega0.rgrid

    @property
    def tgrid(self) -> ThetaGrid:
        return self.omega0.tgrid

    def __add__(self, other: "StateTriple") -> "StateTriple":
        return StateTriple(self.omega0 + other.omega0, self.p0 + other.p0,
                           self.p1 + other.p1)

    def __sub__(self, other: "StateTriple") -> "StateTriple":
        return StateTriple(self.omega0 - other.omega0, self.p0 - other.p0,
                           self.p1 - other.p1)

    def __mul__(self, c: float) -> "StateTriple":
        return StateTriple(self.omega0 * c, self.p0 * float(c), self.p1 * c)

    __rmul__ = __mul__

    def __neg__(self) -> "StateTriple":
        return self * (-1.0)


@dataclass(frozen=True, eq=False)
class GoodTriple:
    """(G_1, P_0, G_2): the transformed unknowns; G_i carry a cos^2(theta)
    factor and vanish toward theta = pi/2."""

    g1: Field2D
    p0: np.ndarray
    g2: Field2D

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        if p0.shape != (self.g1.rgrid.n_z,):
            raise ValueError("p0 must be a radial array")
        object.__setattr__(self, "p0", p0)

    @property
    def rgrid(self) -> RadialGrid:
        return self.g1.rgrid

    @property
    def tgrid(self) -> ThetaGrid:
        return self.g1.tgrid

    def __add__(self, other: "GoodTriple") -> "GoodTriple":
        return GoodTriple(self.g1 + other.g1, self.p0 + other.p0, self.g2 + other.g2)

    def __sub__(self, other: "GoodTriple") -> "GoodTriple":
        return GoodTriple(self.g1 - other.g1, self.p0 - other.p0, self.g2 - other.g2)

    def __mul__(self, c: float) -> "GoodTriple":
        return GoodTriple(self.g1 * c, self.p0 * float(c), self.g2 * c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def d_theta(F):
    """d/dtheta; flips the parity class.

    Spectrally accurate for smooth fields away from pi/2; at the last nodes
    the bare derivative amplifies roundoff (use D_theta or the fused forms
    inside the library for pi/2-critical work).
    """
    if isinstance(F, AngularField):
        dv = _wdtheta(F.grid, F.values, np.ones(F.grid.n_theta))
        return AngularField(F.grid, dv, F.parity.flipped())
    if isinstance(F, Field2D):
        dv = _wdtheta(F.tgrid, F.values, np.ones(F.tgrid.n_theta))
        return F.with_values(dv, parity=F.parity.flipped())
    raise TypeError("d_theta expects AngularField or Field2D")


def D_theta(F):
    """sin(2 theta) d/dtheta; preserves the parity class."""
    if isinstance(F, AngularField):
        dv = _wdtheta(F.grid, F.values, F.grid.sin2)
        return AngularField(F.grid, dv, F.parity)
    if isinstance(F, Field2D):
        dv = _wdtheta(F.tgrid, F.values, F.tgrid.sin2)
        return F.with_values(dv)
    raise TypeError("D_theta expects AngularField or Field2D")


def cos2_d_theta(F):
    """cos^2(theta) d/dtheta, fused; the building block of the B transform.

    Flips parity and gains a cos^2 factor toward pi/2.
    """
    if isinstance(F, AngularField):
        dv = _wdtheta(F.grid, F.values, F.grid.cos_sq)
        return AngularField(F.grid, dv, F.parity.flipped())
    if isinstance(F, Field2D):
        dv = _wdtheta(F.tgrid, F.values, F.tgrid.cos_sq)
        return F.with_values(dv, parity=F.parity.flipped())
    raise TypeError("cos2_d_theta expects AngularField or Field2D")


def D_z(F: Field2D) -> Field2D:
    """z d/dz; the z = 0 row stays zero."""
    if not isinstance(F, Field2D):
        raise TypeError("D_z expects Field2D")
    dv = F.rgrid.mult_Dz[:, None] * (F.rgrid.d_s @ F.values)
    dv[0] = 0.0
    return F.with_values(dv, vanish_order_z0=max(F.vanish_order_z0, 1))


def D_z_radial(rg: RadialGrid, p: np.ndarray) -> np.ndarray:
    """z d/dz for a radial-only array."""
    dv = rg.mult_Dz * (rg.d_s @ p)
    dv[0] = 0.0
    return dv


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def project_mean(F: AngularField) -> float:
    """Slashed mean: (2/pi) int_0^{pi/2} F dtheta."""
    return float(2.0 / np.pi * (F.grid.quadrature_weights @ F.values))


def _mean_rows(tg: ThetaGrid, values: np.ndarray) -> np.ndarray:
    return (2.0 / np.pi) * (values @ tg.quadrature_weights)


def project_P0(F: Field2D) -> Field2D:
    """Zeroth angular mode of the full-circle extension (zero unless the
    parity is even/even)."""
    if F.parity != EVEN_EVEN:
        out = np.zeros_like(F.values)
    else:
        out = np.repeat(_mean_rows(F.tgrid, F.values)[:, None], F.tgrid.n_theta, axis=1)
    return F.with_values(out, parity=EVEN_EVEN)


def project_P1(F: Field2D) -> Field2D:
    """sin(2 theta) shell (nonzero only for odd/odd parity)."""
    tg = F.tgrid
    if F.parity != ODD_ODD:
        return F.with_values(np.zeros_like(F.values), parity=ODD_ODD)
    coef = (4.0 / np.pi) * (F.values @ (tg.quadrature_weights * tg.sin2))
    return F.with_values(np.outer(coef, tg.sin2), parity=ODD_ODD)


def project_P2(F: Field2D) -> Field2D:
    """Second Fourier shell: sin(2 theta) and cos(2 theta) components."""
    tg = F.tgrid
    out = np.zeros_like(F.values)
    if F.parity == ODD_ODD:
        coef = (4.0 / np.pi) * (F.values @ (tg.quadrature_weights * tg.sin2))
        out = np.outer(coef, tg.sin2)
    elif F.parity == EVEN_EVEN:
        coef = (4.0 / np.pi) * (F.values @ (tg.quadrature_weights * tg.cos2))
        out = np.outer(coef, tg.cos2)
    return F.with_values(out)


def project_P1_coefficient(F: Field2D) -> np.ndarray:
    """Radial coefficient rho(z) with P_1 F = rho(z) sin(2 theta)."""
    tg = F.tgrid
    if F.parity != ODD_ODD:
        return np.zeros(F.rgrid.n_z)
    return (4.0 / np.pi) * (F.values @ (tg.quadrature_weights * tg.sin2))


def project_P0_perp(F: Field2D) -> Field2D:
    return F - project_P0(F)


def project_mean_angular(tg: ThetaGrid, values: np.ndarray) -> np.ndarray:
    """Row-wise slashed mean for raw (n_z, n_theta) arrays."""
    return (2.0 / np.pi) * (values @ tg.quadrature_weights)


# ---------------------------------------------------------------------------
# cumulative angular integration
# ---------------------------------------------------------------------------

def integrate_theta_from0(F, weight: np.ndarray | None = None):
    """Cumulative integral int_0^theta F(tau) w(tau) dtau at every node."""
    if isinstance(F, AngularField):
        tg = F.grid
        integ = F.values * tg.dtheta_ds
        if weight is not None:
            integ = integ * weight
        return AngularField(tg, tg.cum_s @ integ, F.parity)
    if isinstance(F, Field2D):
        tg = F.tgrid
        integ = F.values * tg.dtheta_ds[None, :]
        if weight is not None:
            integ = integ * weight[None, :]
        return F.with_values(integ @ tg.cum_s.T)
    raise TypeError("integrate_theta_from0 expects AngularField or Field2D")


def cumulative_theta_values(tg: ThetaGrid, values: np.ndarray,
                            weight: np.ndarray | None = None) -> np.ndarray:
    """Like integrate_theta_from0 but on raw arrays (last axis = theta)."""
    integ = values * tg.dtheta_ds
    if weight is not None:
        integ = integ * weight
    return integ @ tg.cum_s.T


def theta_total(tg: ThetaGrid, values: np.ndarray,
                weight: np.ndarray | None = None) -> np.ndarray:
    """int_0^{pi/2} F w dtheta along the last axis."""
    w = tg.quadrature_weights if weight is None else tg.quadrature_weights * weight
    return values @ w


# ---------------------------------------------------------------------------
# serialization: CSV values + JSON sidecar with the grid metadata
# ---------------------------------------------------------------------------

def save_field2d(F: Field2D, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["z", "theta", "value"])
        for i, z in enumerate(F.rgrid.nodes):
            for j, th in enumerate(F.tgrid.nodes):
                wr.writerow([repr(float(z)), repr(float(th)),
                             repr(float(F.values[i, j]))])
    sidecar = {
        "schema_version": 1,
        "n_z": F.rgrid.n_z,
        "z_max": F.rgrid.z_max,
        "L": F.rgrid.L,
        "n_theta": F.tgrid.n_theta,
        "parity": {"at_zero": F.parity.at_zero, "at_half_pi": F.parity.at_half_pi},
        "vanish_order_z0": F.vanish_order_z0,
        "z_nodes": [repr(float(z)) for z in F.rgrid.nodes],
        "theta_nodes": [repr(float(t)) for t in F.tgrid.nodes],
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_field2d(path: str | Path) -> Field2D:
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        meta = json.load(fh)
    rg = radial_grid(meta["n_z"], meta["z_max"], meta["L"])
    tg = theta_grid(meta["n_theta"])
    vals = np.zeros((rg.n_z, tg.n_theta))
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        flat = np.array([float(row[2]) for row in rd])
    vals[:, :] = flat.reshape(rg.n_z, tg.n_theta)
    par = Parity(meta["parity"]["at_zero"], meta["parity"]["at_half_pi"])
    return Field2D(rg, tg, vals, par, meta["vanish_order_z0"])
