import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from akns_ist.blocks import Grid, partition
from akns_ist.errors import ConfigError
from akns_ist.faddeev import (
    FROM_MINUS,
    FROM_PLUS,
    assemble_xi,
    faddeev_table,
    oscillatory_panel_weights,
    solve_faddeev,
    substep_counts,
    triangular_kernels,
    volterra_defect,
    wedge_complete,
)

from oracles import (
    bump_potential_callable,
    march_reference,
    sech_potential_callable,
)

_CACHE = {}


def _sech_case():
    if "case" not in _CACHE:
        part = partition(1, 1)
        g = Grid(-12.0, 12.0, 601, 6.0, 65)
        Qf = sech_potential_callable(0.3)
        _CACHE["case"] = (part, g, Qf, Qf(g.x_nodes))
    return _CACHE["case"]


def _sech_family(direction, dual):
    key = (direction, dual)
    if key not in _CACHE:
        part, g, _, Q = _sech_case()
        _CACHE[key] = solve_faddeev(Q, g, part, direction, dual=dual, store="all")
    return _CACHE[key]


# ---------------------------------------------------------------------------
# quadrature and bucketing building blocks
# ---------------------------------------------------------------------------

def test_substep_counts():
    k = np.array([0.0, 0.3, -1.9, 2.0, -2.1, 16.0])
    np.testing.assert_array_equal(substep_counts(k), [1, 1, 1, 1, 2, 8])
    np.testing.assert_array_equal(substep_counts(k, k_ref=4.0), [1, 1, 1, 1, 1, 4])


def test_panel_weights_reduce_to_simpson_at_zero_phase():
    w_m, w_c, w_p = oscillatory_panel_weights(np.array([0.0]))
    np.testing.assert_allclose([w_m[0], w_c[0], w_p[0]], [1 / 3, 4 / 3, 1 / 3],
                               atol=1e-14)


@pytest.mark.parametrize("theta", [0.05, 0.49, 0.51, 2.7, -8.3])
def test_panel_weights_integrate_quadratics_exactly(theta):
    # the rule is the interpolating quadratic integrated against the
    # oscillation, so any quadratic f must come out to quadrature precision
    h = 0.35
    t = np.linspace(-h, h, 20001)
    f = 0.7 - 0.4 * t + 1.3 * t * t
    exact = np.trapezoid(f * np.exp(-1j * theta * t / h), t)
    w_m, w_c, w_p = oscillatory_panel_weights(np.array([theta], dtype=complex))
    got = h * (w_m[0] * f[0] + w_c[0] * f[10000] + w_p[0] * f[-1])
    assert abs(got - exact) < 1e-8


def test_panel_weight_series_branch_matches_closed_form():
    # 0.45 is inside the series branch but large enough that the closed
    # forms have not yet lost digits to cancellation
    th = 0.45
    a0 = 2.0 * np.sin(th) / th
    a1 = -2j * (np.sin(th) - th * np.cos(th)) / th**2
    a2 = 2.0 * (2.0 * np.cos(th) / th**2 + np.sin(th) / th - 2.0 * np.sin(th) / th**3)
    expected = (0.5 * (a2 - a1), a0 - a2, 0.5 * (a2 + a1))
    got = oscillatory_panel_weights(np.array([th]))
    for g_val, e_val in zip(got, expected):
        assert abs(g_val[0] - e_val) < 1e-12


# ---------------------------------------------------------------------------
# zero potential: everything is the identity, exactly
# ---------------------------------------------------------------------------

def test_zero_potential_is_machine_exact_identity():
    part = partition(1, 1)
    g = Grid(-10.0, 10.0, 201, 5.0, 33)
    Q = np.zeros((g.nx, 3, 3), dtype=complex)
    eye = np.eye(3)
    for direction in (FROM_PLUS, FROM_MINUS):
        for dual in (False, True):
            sol = solve_faddeev(Q, g, part, direction, dual=dual, store="all")
            assert np.max(np.abs(sol.values - eye)) == 0.0
            assert np.max(np.abs(sol.transition_integral - eye)) == 0.0
            assert np.max(np.abs(sol.transition_far - eye)) == 0.0


def test_zero_potential_stepwise_and_complex_k():
    part = partition(1, 1)
    g = Grid(-10.0, 10.0, 201, 5.0, 17)
    Q = np.zeros((g.nx, 3, 3), dtype=complex)
    sol = solve_faddeev(Q, g, part, FROM_PLUS, store="all", method="stepwise")
    assert np.max(np.abs(sol.values - np.eye(3))) < 1e-12
    solc = solve_faddeev(
        Q, g, part, FROM_PLUS, k=np.array([0.4 + 0.9j]), sector="plus", store="all"
    )
    expected = np.zeros((3, 1))
    expected[0, 0] = 1.0
    assert np.max(np.abs(solc.values - expected)) < 1e-12


# ---------------------------------------------------------------------------
# agreement with an independent adaptive integrator
# ---------------------------------------------------------------------------

def test_left_normalized_family_matches_adaptive_integrator():
    part, g, Qf, Q = _sech_case()
    sol = _sech_family(FROM_PLUS, False)
    for kv in (0.0, 0.75, -1.3125, 2.0625):
        ki = int(np.argmin(np.abs(g.k_nodes - kv)))
        ref = march_reference(Qf, part.sigma_diag, g.k_nodes[ki],
                              g.x_nodes[::60], g.x_max)
        np.testing.assert_allclose(sol.values[::60, ki], ref, atol=2e-7)


def test_right_normalized_family_matches_adaptive_integrator():
    part, g, Qf, Q = _sech_case()
    sol = _sech_family(FROM_MINUS, False)
    ki = 40
    ref = march_reference(Qf, part.sigma_diag, g.k_nodes[ki],
                          g.x_nodes[::60], g.x_min)
    np.testing.assert_allclose(sol.values[::60, ki], ref, atol=2e-7)


@pytest.mark.parametrize("direction,normalize_right", [
    (FROM_PLUS, True), (FROM_MINUS, False),
])
def test_dual_families_match_adaptive_integrator(direction, normalize_right):
    part, g, Qf, Q = _sech_case()
    sol = _sech_family(direction, True)
    ki = 40
    norm_at = g.x_max if normalize_right else g.x_min
    ref = march_reference(Qf, part.sigma_diag, g.k_nodes[ki],
                          g.x_nodes[::60], norm_at, dual=True)
    np.testing.assert_allclose(sol.values[::60, ki], ref, atol=2e-7)


def test_scan_and_stepwise_paths_agree():
    part, g, Qf, Q = _sech_case()
    k = g.k_nodes[::8]
    a = solve_faddeev(Q, g, part, FROM_PLUS, k=k, store="all", method="scan")
    b = solve_faddeev(Q, g, part, FROM_PLUS, k=k, store="all", method="stepwise")
    assert np.max(np.abs(a.values - b.values)) < 1e-10
    assert np.max(np.abs(a.transition_integral - b.transition_integral)) < 1e-10
    assert np.max(np.abs(a.transition_far - b.transition_far)) < 1e-10


# ---------------------------------------------------------------------------
# structural identities
# ---------------------------------------------------------------------------

def test_dual_is_the_literal_inverse_and_det_is_one():
    part = partition(2, 1)
    g = Grid(-10.0, 10.0, 401, 3.0, 9)
    Qf = bump_potential_callable(2, 1, seed=7)
    Q = Qf(g.x_nodes)
    sM = solve_faddeev(Q, g, part, FROM_PLUS, store="all")
    sMu = solve_faddeev(Q, g, part, FROM_PLUS, dual=True, store="all")
    prod = sMu.values @ sM.values
    assert np.max(np.abs(prod - np.eye(part.n))) < 1e-10
    assert np.max(np.abs(np.linalg.det(sM.values) - 1.0)) < 1e-10


def test_transition_integral_agrees_with_far_endpoint_route():
    for direction, dual in ((FROM_PLUS, False), (FROM_MINUS, False),
                            (FROM_PLUS, True), (FROM_MINUS, True)):
        sol = _sech_family(direction, dual)
        err = np.max(np.abs(sol.transition_integral - sol.transition_far))
        assert err < 1e-6, (direction, dual, err)


def test_left_and_right_transitions_are_inverses():
    sM = _sech_family(FROM_PLUS, False)
    sN = _sech_family(FROM_MINUS, False)
    prod = sM.transition_integral @ sN.transition_integral
    assert np.max(np.abs(prod - np.eye(3))) < 1e-6


def test_dual_marches_accumulate_the_partner_transition():
    # the inverse of the left-normalized family integrates to the right
    # transition matrix and vice versa
    sN = _sech_family(FROM_MINUS, False)
    sMu = _sech_family(FROM_PLUS, True)
    assert np.max(np.abs(sMu.transition_integral - sN.transition_integral)) < 1e-7
    sM = _sech_family(FROM_PLUS, False)
    sNu = _sech_family(FROM_MINUS, True)
    assert np.max(np.abs(sNu.transition_integral - sM.transition_integral)) < 1e-7


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=8, deadline=None)
def test_duality_holds_for_random_potentials(seed):
    part = partition(1, 1)
    g = Grid(-8.0, 8.0, 121, 2.0, 5)
    Q = bump_potential_callable(1, 1, seed=seed)(g.x_nodes)
    k = np.array([0.35, -1.6])
    sM = solve_faddeev(Q, g, part, FROM_PLUS, k=k, store="endpoints")
    sMu = solve_faddeev(Q, g, part, FROM_PLUS, k=k, dual=True, store="endpoints")
    prod = sMu.values @ sM.values
    assert np.max(np.abs(prod - np.eye(3))) < 1e-8
    assert np.max(np.abs(np.linalg.det(sM.values) - 1.0)) < 1e-8


def test_volterra_defect_is_small():
    sol = _sech_family(FROM_PLUS, False)
    _, _, _, Q = _sech_case()
    assert volterra_defect(sol, Q, x_index=150, k_index=40) < 1e-5
    solN = _sech_family(FROM_MINUS, False)
    assert volterra_defect(solN, Q, x_index=450, k_index=28) < 1e-5


# ---------------------------------------------------------------------------
# complex k, restricted sectors
# ---------------------------------------------------------------------------

def test_restricted_columns_match_integrator_off_the_real_axis():
    part, g, Qf, Q = _sech_case()
    kc = np.array([0.5 + 0.8j])
    sol = solve_faddeev(Q, g, part, FROM_PLUS, k=kc, sector="plus", store="all")
    ref = march_reference(Qf, part.sigma_diag, kc[0], g.x_nodes[::60], g.x_max,
                          columns=np.array([0]))
    np.testing.assert_allclose(sol.values[::60, 0], ref, atol=1e-6)
    # the restricted column is the bounded one
    assert np.max(np.abs(sol.values)) < 10.0

    solN = solve_faddeev(Q, g, part, FROM_MINUS, k=kc, sector="minus", store="all")
    refN = march_reference(Qf, part.sigma_diag, kc[0], g.x_nodes[::60], g.x_min,
                           columns=np.array([2]))
    np.testing.assert_allclose(solN.values[::60, 0], refN, atol=1e-6)


def test_restricted_dual_rows_match_integrator_off_the_real_axis():
    part, g, Qf, Q = _sech_case()
    kc = np.array([0.5 + 0.8j])
    sol = solve_faddeev(Q, g, part, FROM_PLUS, k=kc, dual=True, sector="minus",
                        store="all")
    ref = march_reference(Qf, part.sigma_diag, kc[0], g.x_nodes[::60], g.x_max,
                          dual=True, columns=np.array([2]))
    np.testing.assert_allclose(sol.values[::60, 0], ref, atol=1e-6)


def test_complex_k_transition_keeps_only_unphased_entries():
    part, g, Qf, Q = _sech_case()
    kc = np.array([0.5 + 0.8j])
    sol = solve_faddeev(Q, g, part, FROM_PLUS, k=kc, sector="plus", store="all")
    # rows outside the sector carry a growing/decaying phase and are zeroed
    assert sol.transition_far[0, 1, 0] == 0.0
    assert sol.transition_far[0, 2, 0] == 0.0
    ref = march_reference(Qf, part.sigma_diag, kc[0], np.array([g.x_min, 0.0]),
                          g.x_max, columns=np.array([0]))
    assert abs(sol.transition_far[0, 0, 0] - ref[0, 0, 0]) < 1e-6
    assert abs(sol.transition_integral[0, 0, 0] - ref[0, 0, 0]) < 1e-6


# ---------------------------------------------------------------------------
# wedge completion of the analytic families
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2])
def test_wedge_completion_is_center_vector_for_zero_potential(m):
    part = partition(m, m)
    n = part.n
    g = Grid(-6.0, 6.0, 121, 3.0, 9)
    Q = np.zeros((g.nx, n, n), dtype=complex)
    sNu = solve_faddeev(Q, g, part, FROM_MINUS, dual=True, store="all")
    sMu = solve_faddeev(Q, g, part, FROM_PLUS, dual=True, store="all")
    omega = wedge_complete(
        sNu.values[:, :, part.sl_plus, :], sMu.values[:, :, part.sl_minus, :], part
    )
    expected = np.zeros(n)
    expected[part.i_zero] = 1.0
    assert np.max(np.abs(omega - expected)) == 0.0


def test_wedge_completion_solves_the_full_system():
    # fourth-order finite differences of the completed column against
    # ik Sigma + Q applied to it; this pins the row ordering, the sign
    # prefactor, and the cancellation of the two normalizations' phases
    part, g, Qf, Q = _sech_case()
    ki = 42  # k = 1.875
    k = g.k_nodes[ki]
    sNu = _sech_family(FROM_MINUS, True)
    sMu = _sech_family(FROM_PLUS, True)
    omega = wedge_complete(
        sNu.values[:, ki : ki + 1, part.sl_plus, :],
        sMu.values[:, ki : ki + 1, part.sl_minus, :],
        part,
    )[:, 0, :]
    dx = g.dx
    i = np.arange(120, 481)
    d_omega = (
        -omega[i + 2] + 8.0 * omega[i + 1] - 8.0 * omega[i - 1] + omega[i - 2]
    ) / (12.0 * dx)
    rhs = (1j * k * part.sigma_diag[None, :]) * omega[i] + np.einsum(
        "xab,xb->xa", Q[i], omega[i]
    )
    assert np.max(np.abs(d_omega - rhs)) < 1e-5
    # and it is genuinely the missing column: bounded, center-dominant
    assert np.max(np.abs(omega)) < 3.0


def test_assemble_xi_stacks_blocks():
    left = np.zeros((2, 5, 3, 1), dtype=complex)
    right = np.ones((2, 5, 3, 1), dtype=complex)
    center = np.full((2, 5, 3), 2.0, dtype=complex)
    xi = assemble_xi(left, center, right)
    assert xi.shape == (2, 5, 3, 3)
    assert np.all(xi[..., 0] == 0.0)
    assert np.all(xi[..., 1] == 2.0)
    assert np.all(xi[..., 2] == 1.0)


# ---------------------------------------------------------------------------
# triangular representation kernels
# ---------------------------------------------------------------------------

def test_triangular_kernel_boundary_values_reproduce_the_potential():
    part = partition(1, 1)
    g = Grid(-12.0, 12.0, 401, 12.0, 385)
    Qf = sech_potential_callable(0.3)
    Q = Qf(g.x_nodes)
    sM = solve_faddeev(Q, g, part, FROM_PLUS, store="all")
    sN = solve_faddeev(Q, g, part, FROM_MINUS, store="all")
    gamma, kern = triangular_kernels(sM, sN, part)
    assert gamma[0] == 0.0
    central = np.abs(g.x_nodes) <= 7.0
    q_up = Q[central, 1, 0]  # the zero-row entry of the + sector column
    q_dn = Q[central, 1, 2]
    np.testing.assert_allclose(-kern["K_plus"][central, 0, 1, 0], q_up, atol=1e-3)
    np.testing.assert_allclose(kern["J_plus"][central, 0, 1, 0], q_up, atol=1e-3)
    np.testing.assert_allclose(-kern["K_minus"][central, 0, 1, 0], q_dn, atol=1e-3)
    np.testing.assert_allclose(kern["J_minus"][central, 0, 1, 0], q_dn, atol=1e-3)
    # corner sectors of this potential vanish, so those kernel rows must too
    assert np.max(np.abs(kern["K_plus"][central, 0, 2, 0])) < 1e-3
    assert np.max(np.abs(kern["J_minus"][central, 0, 0, 0])) < 1e-3


# ---------------------------------------------------------------------------
# bookkeeping and failure paths
# ---------------------------------------------------------------------------

def test_store_subset_and_accessor():
    part, g, Qf, Q = _sech_case()
    idx = np.array([0, 300, 600])
    sol = solve_faddeev(Q, g, part, FROM_PLUS, k=np.array([0.5]), store=idx)
    assert sol.values.shape == (3, 1, 3, 3)
    np.testing.assert_array_equal(sol.x_stored, g.x_nodes[idx])
    np.testing.assert_array_equal(sol.at(300), sol.values[1])
    with pytest.raises(ConfigError):
        sol.at(299)


def test_table_unions_requested_stores_with_endpoints():
    part, g, Qf, Q = _sech_case()
    table = faddeev_table(Q, g, part, store=np.array([300]))
    # the window ends are always kept alongside the request
    for fam in (table.M, table.N, table.M_dual, table.N_dual):
        np.testing.assert_array_equal(fam.x_stored, g.x_nodes[[0, 300, 600]])


def test_table_frames_are_plane_waves_without_potential():
    part = partition(1, 1)
    g = Grid(-8.0, 8.0, 201, 4.0, 65)
    Q = np.zeros((201, 3, 3), dtype=complex)
    table = faddeev_table(Q, g, part, store=np.array([100]))
    sig = np.array([1.0, 0.0, -1.0])
    for ix in (0, 100, 200):
        x = g.x_nodes[ix]
        frame = np.exp(1j * np.multiply.outer(table.k, x * sig))
        want = frame[:, None, :] * np.eye(3)
        assert np.max(np.abs(table.xi_plus(ix) - want)) < 1e-12
        assert np.max(np.abs(table.xi_minus(ix) - want)) < 1e-12


def test_config_errors():
    part, g, Qf, Q = _sech_case()
    with pytest.raises(ConfigError):
        solve_faddeev(Q, g, part, "sideways")
    with pytest.raises(ConfigError):
        solve_faddeev(Q[:, :2, :2], g, part, FROM_PLUS)
    with pytest.raises(ConfigError):
        solve_faddeev(Q, g, part, FROM_PLUS, k=np.array([1j]))
    with pytest.raises(ConfigError):
        solve_faddeev(Q, g, part, FROM_PLUS, k=np.array([1j]), sector="plus",
                      method="scan")
    with pytest.raises(ConfigError):
        solve_faddeev(Q, g, part, FROM_PLUS, store="most")
    with pytest.raises(ConfigError):
        solve_faddeev(Q, g, part, FROM_PLUS, store=np.array([0, 601]))
