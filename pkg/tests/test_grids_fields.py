import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssblow.fields import (EVEN_EVEN, EVEN_ODD, ODD_ODD, AngularField,
                           Field2D, Parity, D_theta, D_z, d_theta,
                           integrate_theta_from0, load_field2d, project_mean,
                           project_P0, project_P1, project_P2, save_field2d)
from ssblow.grids import HALF_PI, radial_grid, theta_grid

TG = theta_grid(128)
RG = radial_grid(160, 50.0)


def test_theta_grid_invariants():
    assert TG.nodes[0] > 0.0 and TG.nodes[-1] < HALF_PI
    assert np.all(np.diff(TG.nodes) > 0)
    assert np.all(TG.quadrature_weights > 0)
    assert abs(TG.quadrature_weights.sum() - HALF_PI) < 1e-12 * HALF_PI
    # gamma = tan(theta): checked directly where tan is well conditioned,
    # through the exact cotangent identity at the pi/2-adjacent nodes
    safe = TG.u > 1e-3
    assert np.allclose(TG.gamma_nodes[safe], np.tan(TG.nodes[safe]), rtol=1e-12)
    assert np.allclose(TG.gamma_nodes * np.tan(TG.u), 1.0, rtol=1e-13)


def test_quadrature_sin2sq():
    val = TG.quadrature_weights @ TG.sin2**2
    assert abs(val - np.pi / 4) < 1e-12


def test_radial_grid_invariants():
    assert RG.nodes[0] == 0.0
    assert np.all(np.diff(RG.nodes) > 0)
    assert RG.z_max >= 50.0
    with pytest.raises(ValueError):
        radial_grid(160, 10.0)


def test_d_theta_examples():
    f = AngularField(TG, TG.sin2.copy(), ODD_ODD)
    df = d_theta(f)
    assert df.parity == EVEN_EVEN
    interior = TG.u > 1e-6
    assert np.max(np.abs(df.values - 2 * TG.cos2)[interior]) < 1e-9
    g = AngularField(TG, TG.cos_sq.copy(), EVEN_EVEN)
    dg = d_theta(g)
    assert np.max(np.abs(dg.values + TG.sin2)[interior]) < 1e-9


def test_d_theta_one_sided_near_half_pi():
    # near pi/2 the bare derivative is only finite-difference grade
    gs_vals = TG.u**1.5
    f = AngularField(TG, gs_vals, EVEN_EVEN)
    df = d_theta(f).values
    exact = -1.5 * TG.u**0.5
    tail = TG.u < 1e-6
    assert np.max(np.abs(df - exact)[~tail]) < 1e-8
    assert np.max(np.abs(df - exact)[tail]) < 1e-4   # one-sided grade


def test_D_theta_examples():
    f = AngularField(TG, TG.cos2.copy(), EVEN_EVEN)
    out = D_theta(f)
    assert out.parity == EVEN_EVEN
    assert np.max(np.abs(out.values + 2 * TG.sin2**2)) < 1e-11
    const = AngularField(TG, np.full(TG.n_theta, 3.3), EVEN_EVEN)
    assert np.max(np.abs(D_theta(const).values)) < 1e-12
    g = AngularField(TG, TG.cos_sq.copy(), EVEN_EVEN)
    assert np.max(np.abs(D_theta(g).values + TG.sin2**2)) < 1e-11


def test_D_z_examples():
    z = RG.nodes
    vals = np.outer(z / (1 + z) ** 2, np.ones(TG.n_theta))
    vals[0] = 0.0
    F = Field2D(RG, TG, vals, EVEN_EVEN, 1)
    out = D_z(F)
    expect = np.outer(z * (1 - z) / (1 + z) ** 3, np.ones(TG.n_theta))
    assert np.max(np.abs(out.values - expect)) < 1e-12
    assert np.all(out.values[0] == 0.0)
    const = Field2D(RG, TG, np.ones((RG.n_z, TG.n_theta)), EVEN_EVEN, 0)
    assert np.max(np.abs(D_z(const).values)) < 1e-12
    sq = Field2D(RG, TG, np.outer(z**2, np.ones(TG.n_theta)), EVEN_EVEN, 1)
    err = np.abs(D_z(sq).values - np.outer(2 * z**2, np.ones(TG.n_theta)))
    # z^2 is rational in the mapped variable; measure where it is resolved
    interior = z <= 5.0
    assert np.max(err[interior]) < 1e-4


def test_project_mean_examples():
    one = AngularField(TG, np.ones(TG.n_theta), EVEN_EVEN)
    assert abs(project_mean(one) - 1.0) < 1e-13
    c2 = AngularField(TG, TG.cos_sq.copy(), EVEN_EVEN)
    assert abs(project_mean(c2) - 0.5) < 1e-13


def test_projections_idempotent_orthogonal():
    rng = np.random.default_rng(0)
    vals = np.outer(RG.s * RG.om, np.sin(2 * TG.nodes) + 0.5 * np.sin(6 * TG.nodes))
    F = Field2D(RG, TG, vals, ODD_ODD, 1)
    p1 = project_P1(F)
    p1p1 = project_P1(p1)
    assert np.max(np.abs(p1.values - p1p1.values)) < 1e-12
    resid = F - p1
    w = TG.quadrature_weights
    cross = np.abs((p1.values * resid.values) @ w).max()
    norm = ((F.values**2) @ w).max()
    assert cross <= 1e-10 * norm
    # P0 of cos 2theta vanishes
    c2 = Field2D(RG, TG, np.outer(np.ones(RG.n_z), TG.cos2), EVEN_EVEN, 0)
    assert np.max(np.abs(project_P0(c2).values)) < 1e-13
    # P2 of sin 4theta vanishes
    s4 = Field2D(RG, TG, np.outer(np.ones(RG.n_z), np.sin(4 * TG.nodes)), ODD_ODD, 0)
    assert np.max(np.abs(project_P2(s4).values)) < 1e-12
    # P1 reproduces a pure shell
    shell = Field2D(RG, TG, np.outer(RG.s, TG.sin2), ODD_ODD, 1)
    assert np.max(np.abs(project_P1(shell).values - shell.values)) < 1e-12


def test_integrate_theta_from0():
    f = AngularField(TG, TG.cos_theta.copy(), EVEN_ODD)
    out = integrate_theta_from0(f)
    assert np.max(np.abs(out.values - TG.sin_theta)) < 1e-13
    zero = AngularField(TG, np.zeros(TG.n_theta), EVEN_EVEN)
    assert np.max(np.abs(integrate_theta_from0(zero).values)) == 0.0


def test_integration_derivative_roundtrip():
    tg = theta_grid(256)
    f = AngularField(tg, np.cos(2 * tg.nodes) + 0.2 * np.cos(6 * tg.nodes),
                     EVEN_EVEN)
    df = d_theta(f)
    back = integrate_theta_from0(df)
    shift = f.values - f.values[0] - (back.values - back.values[0])
    assert np.max(np.abs(shift)) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=1, max_value=6))
def test_parity_bookkeeping(m1, m2):
    # d_theta flips the class, D_theta preserves it
    f = AngularField(TG, np.sin(2 * m1 * TG.nodes) * np.sin(2 * m2 * TG.nodes),
                     EVEN_EVEN)
    assert d_theta(f).parity == Parity("odd", "odd")
    assert D_theta(f).parity == EVEN_EVEN


def test_field2d_serialization_roundtrip(tmp_path):
    rg, tg = radial_grid(32, 50.0), theta_grid(16)
    vals = np.outer(rg.s, np.sin(2 * tg.nodes))
    F = Field2D(rg, tg, vals, ODD_ODD, 1)
    save_field2d(F, tmp_path / "f.csv")
    G = load_field2d(tmp_path / "f.csv")
    assert np.array_equal(F.values, G.values)
    assert G.parity == F.parity and G.vanish_order_z0 == 1


def test_field2d_validation():
    with pytest.raises(ValueError):
        Field2D(RG, TG, np.ones((RG.n_z, TG.n_theta)), ODD_ODD, 1)
    bad = np.zeros((RG.n_z, TG.n_theta))
    bad[3, 4] = np.nan
    with pytest.raises(ValueError):
        Field2D(RG, TG, bad, ODD_ODD, 0)
