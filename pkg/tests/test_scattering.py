import copy

import numpy as np
import pytest

from akns_ist.blocks import Grid, partition
from akns_ist.errors import (
    ConfigError,
    SpectralSingularityError,
    ToleranceError,
    WindingError,
)
from akns_ist.faddeev import faddeev_table
from akns_ist.potential import assemble_potential, focusing_signature, sech_fields
from akns_ist.scattering import (
    corrected_coefficients,
    d_matrices,
    scattering_data,
    scattering_matrices,
    transition_matrices,
)
from akns_ist.wiener_hopf import factorize_scalar

_CACHE = {}

_XI_SAMPLES = [100, 200, 300, 400, 500]


def _sech_pipeline():
    """Shared forward pipeline for a focusing sech potential, n = 3."""
    if "sech" not in _CACHE:
        part = partition(1, 1)
        grid = Grid(-12.0, 12.0, 601, 6.0, 257)
        Q = assemble_potential(sech_fields(grid.x_nodes, amplitude=0.3))
        table = faddeev_table(Q, grid, part, store=np.array(_XI_SAMPLES))
        trans = transition_matrices(table)
        dm = d_matrices(trans, table)
        sm = scattering_matrices(trans, dm)
        _CACHE["sech"] = (part, grid, table, trans, dm, sm)
    return _CACHE["sech"]


def _zero_pipeline():
    if "zero" not in _CACHE:
        part = partition(1, 1)
        grid = Grid(-8.0, 8.0, 201, 4.0, 65)
        Q = np.zeros((grid.nx, 3, 3), dtype=complex)
        table = faddeev_table(Q, grid, part)
        trans = transition_matrices(table)
        dm = d_matrices(trans, table)
        sm = scattering_matrices(trans, dm)
        _CACHE["zero"] = (part, grid, table, trans, dm, sm)
    return _CACHE["zero"]


# ---------------------------------------------------------------------------
# transition matrices
# ---------------------------------------------------------------------------

def test_zero_potential_transition_is_identity():
    part, grid, table, trans, dm, sm = _zero_pipeline()
    eye = np.eye(3)
    assert np.max(np.abs(trans.A_l - eye)) < 1e-12
    assert np.max(np.abs(trans.A_r - eye)) < 1e-12
    assert trans.route_gap < 1e-12
    assert trans.inverse_defect < 1e-12


def test_sech_transition_identities():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert trans.route_gap < 1e-6
    assert trans.inverse_defect < 1e-6
    assert trans.det_defect < 1e-7


def test_focusing_symmetry_relates_left_and_right():
    # Q dagger = -sigma Q sigma carries over to A_left dagger = sigma A_right sigma
    part, grid, table, trans, dm, sm = _sech_pipeline()
    sigma = focusing_signature(part)
    lhs = np.conj(np.swapaxes(trans.A_l, -1, -2))
    rhs = sigma[None, :, None] * trans.A_r * sigma[None, None, :]
    assert np.max(np.abs(lhs - rhs)) < 1e-6


def test_analytic_blocks_match_grid_on_the_axis():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    sub = trans.k[::32].real
    slp, slm = part.sl_plus, part.sl_minus
    pairs = [
        ("l_pp", trans.A_l[::32][:, slp, slp]),
        ("r_mm", trans.A_r[::32][:, slm, slm]),
        ("r_pp", trans.A_r[::32][:, slp, slp]),
        ("l_mm", trans.A_l[::32][:, slm, slm]),
    ]
    for name, expect in pairs:
        got = trans.analytic_block(name, sub)
        assert np.max(np.abs(got - expect)) < 1e-7, name


def test_analytic_block_half_plane_guard():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    with pytest.raises(ConfigError):
        trans.analytic_block("l_pp", np.array([1.0 - 0.5j]))
    with pytest.raises(ConfigError):
        trans.analytic_block("r_pp", np.array([1.0 + 0.5j]))
    with pytest.raises(ConfigError):
        trans.analytic_block("nonsense", np.array([1.0j]))


def test_analytic_det_satisfies_cauchy_formula():
    # Integrating around a rectangle in the upper half plane must
    # reproduce the center value if the continuation really is analytic.
    part, grid, table, trans, dm, sm = _sech_pipeline()
    z0 = 0.5 + 0.9j
    corners = [-2.0 + 0.15j, 2.0 + 0.15j, 2.0 + 2.2j, -2.0 + 2.2j]
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        ts = np.linspace(0.0, 1.0, 97)
        pts = a + (b - a) * ts
        vals = trans.analytic_det("upper", pts) / (pts - z0)
        total += np.trapezoid(vals, pts)
    center = trans.analytic_det("upper", np.array([z0]))[0]
    assert abs(total / (2j * np.pi) - center) < 1e-4


# ---------------------------------------------------------------------------
# far-limit D matrices
# ---------------------------------------------------------------------------

def test_zero_potential_far_limits_are_identity():
    part, grid, table, trans, dm, sm = _zero_pipeline()
    eye = np.eye(3)
    for D in (dm.up_plus, dm.dn_plus, dm.up_minus, dm.dn_minus):
        assert np.max(np.abs(D - eye)) < 1e-12


def test_far_limit_center_routes_agree():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert dm.center_route_gap < 1e-5


def test_forced_cancellation_sector():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert dm.cancellation_max < 1e-6
    # after assembly the forced sectors are exactly zero
    i0 = part.i_zero
    assert np.all(dm.up_plus[:, part.sl_minus, i0] == 0.0)
    assert np.all(dm.dn_plus[:, part.sl_plus, i0] == 0.0)


def test_center_scalar_reduces_to_corner_entry_for_n3():
    # with one short-wave pair the center of the upper right limit
    # collapses to the (+,+) transition entry itself
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert np.max(np.abs(dm.up_plus[:, 1, 1] - trans.A_l[:, 0, 0])) < 1e-6
    assert np.max(np.abs(dm.dn_minus[:, 1, 1] - trans.A_r[:, 0, 0])) < 1e-6


# ---------------------------------------------------------------------------
# scattering matrices
# ---------------------------------------------------------------------------

def test_zero_potential_scattering_is_identity():
    part, grid, table, trans, dm, sm = _zero_pipeline()
    eye = np.eye(3)
    assert np.max(np.abs(sm.S - eye)) < 1e-12
    assert np.max(np.abs(sm.S_tilde - eye)) < 1e-12
    assert sm.spectral_singularities.size == 0


def test_block_assembly_agrees_with_triangular_solves():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert sm.route_defect < 1e-6


def test_scattering_matrices_are_mutually_inverse():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert sm.inverse_defect < 5e-7


def test_det_s_is_unimodular_for_focusing_data():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    assert np.max(np.abs(np.abs(np.linalg.det(sm.S)) - 1.0)) < 1e-7


def test_focusing_transmission_corners_are_conjugate():
    # for focusing data the corner diagonal blocks of the two scattering
    # matrices are conjugate transposes of each other (they inherit the
    # signature symmetry of the transition matrices); the center row and
    # column carry normalization factors that break any plain-dagger or
    # signature-dagger relation for the full matrix
    part, grid, table, trans, dm, sm = _sech_pipeline()
    for sl in (part.sl_plus, part.sl_minus):
        lhs = np.conj(np.swapaxes(sm.S[:, sl, sl], -1, -2))
        assert np.max(np.abs(lhs - sm.S_tilde[:, sl, sl])) < 1e-6


def test_bounded_families_are_related_by_s():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    for ix in _XI_SAMPLES:
        lhs = table.xi_minus(ix)
        rhs = table.xi_plus(ix) @ sm.S
        assert np.max(np.abs(lhs - rhs)) < 1e-5, ix


def test_singular_center_scalar_raises():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    bad = copy.deepcopy(dm)
    bad.dn_plus[40, part.i_zero, part.i_zero] = 1e-13
    with pytest.raises(SpectralSingularityError):
        scattering_matrices(trans, bad)


def test_near_singular_scalar_is_flagged():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    bad = copy.deepcopy(dm)
    bad.dn_plus[40, part.i_zero, part.i_zero] = 5e-7
    flagged = scattering_matrices(trans, bad).spectral_singularities
    assert np.any(np.isclose(flagged, trans.k[40].real))


def test_inconsistent_cancellation_raises():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    broken = copy.deepcopy(table)
    broken.M_dual.values[:] = np.roll(broken.M_dual.values, 1, axis=-1)
    with pytest.raises(ToleranceError):
        d_matrices(trans, broken)


# ---------------------------------------------------------------------------
# corrected coefficients
# ---------------------------------------------------------------------------

def _sech_corrected():
    if "corrected" not in _CACHE:
        part, grid, table, trans, dm, sm = _sech_pipeline()
        i0 = part.i_zero
        k = trans.k.real
        wh = factorize_scalar(k, sm.S[:, i0, i0])
        wh_tilde = factorize_scalar(k, sm.S_tilde[:, i0, i0])
        _CACHE["corrected"] = (wh, wh_tilde,
                               corrected_coefficients(sm, wh, wh_tilde))
    return _CACHE["corrected"]


def test_corrected_coefficients_zero_potential():
    part, grid, table, trans, dm, sm = _zero_pipeline()
    i0 = part.i_zero
    wh = factorize_scalar(trans.k.real, sm.S[:, i0, i0])
    wh_tilde = factorize_scalar(trans.k.real, sm.S_tilde[:, i0, i0])
    cc = corrected_coefficients(sm, wh, wh_tilde)
    eye = np.eye(3)
    assert np.max(np.abs(cc.T - eye)) < 1e-12
    assert np.max(np.abs(cc.C - eye)) < 1e-12
    assert np.max(np.abs(cc.R)) < 1e-12


def test_reflection_split_round_trips():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    wh, wh_tilde, cc = _sech_corrected()
    assert cc.diag_residual < 1e-6
    # (T - C_tilde^{-1} R) C = S is pure algebra once the split exists
    rebuilt = (cc.T - np.linalg.solve(cc.C_tilde, cc.R)) @ cc.C
    assert np.max(np.abs(rebuilt - sm.S)) < 1e-8
    rebuilt_t = (cc.T_tilde - np.linalg.solve(cc.C, cc.R_tilde)) @ cc.C_tilde
    assert np.max(np.abs(rebuilt_t - sm.S_tilde)) < 1e-8


def test_reflection_data_is_off_block_diagonal():
    part, grid, table, trans, dm, sm = _sech_pipeline()
    wh, wh_tilde, cc = _sech_corrected()
    i0 = part.i_zero
    for A in (cc.R, cc.R_tilde):
        assert np.all(A[:, part.sl_plus, part.sl_plus] == 0.0)
        assert np.all(A[:, part.sl_minus, part.sl_minus] == 0.0)
        assert np.all(A[:, i0, i0] == 0.0)


def test_nonzero_winding_blocks_the_split():
    import dataclasses
    part, grid, table, trans, dm, sm = _sech_pipeline()
    wh, wh_tilde, cc = _sech_corrected()
    with pytest.raises(WindingError):
        corrected_coefficients(sm, dataclasses.replace(wh, winding=1), wh_tilde)


# ---------------------------------------------------------------------------
# one-call driver
# ---------------------------------------------------------------------------

def test_scattering_data_driver():
    part = partition(1, 1)
    grid = Grid(-12.0, 12.0, 601, 6.0, 257)
    Q = assemble_potential(sech_fields(grid.x_nodes, amplitude=0.3))
    sd = scattering_data(Q, grid, part, with_discrete=False)
    assert sd.winding == 0 and sd.winding_tilde == 0
    assert sd.corrected is not None
    assert sd.spectral_singularities.size == 0
    assert sd.S.shape == (257, 3, 3)
    assert sd.eigen_plus == [] and sd.eigen_minus == []
