"""Transition matrices, far-field frames, and scattering matrices.

The marched wavefunctions settle, after the phase twist
e^{-ikx Sigma} (.) e^{ikx Sigma}, to constant matrices at the far ends:
A_left on the left for the right-normalized family, A_right on the
right for the left-normalized one, with A_left A_right = I and unit
determinants.  Four of their corner blocks extend analytically off the
real axis (++ of A_left and -- of A_right upward, ++ of A_right and
-- of A_left downward); those continuations carry the discrete
spectrum and are exposed here as batched evaluators.

The two bounded column families

    Xi_up  = [M e_+ e^{ikx} | omega_+ | N e_- e^{-ikx}],
    Xi_dn  = [N e_+ e^{ikx} | omega_- | M e_- e^{-ikx}],

have their own twisted limits, one per end: each limit is block
triangular, its outer stripes are whole columns of A_left or A_right,
and its center column comes from the wedge completion.  One sector of
that center column must vanish in the limit (the triangularity says
so); the residual before forcing it to zero is a sharp consistency
check on the four marches.  Writing D for these limits, the frames are
related by

    Xi_dn = Xi_up S,   Xi_up = Xi_dn S_tilde,
    S = (D_up^+)^{-1} D_dn^-  = (D_dn^+)^{-1} D_up^-,

and the assembly below uses the per-block closed forms obtained by
eliminating the triangular factors, so only small sector blocks are
ever inverted.  Near-singular blocks are flagged (and, past a floor,
refused) because a vanishing block determinant on the real axis is a
spectral singularity, outside the solvable class.

The corrected transmission data splits S into block-diagonal and
block-off-diagonal parts via the scalar factorization of its central
entry: with S00 = a_up a_dn (upward/downward analytic factors),

    T = diag(A_left_{++}^{-1}, a_up, A_right_{--}^{-1}),
    C = diag(I, a_dn, I),
    R = C_tilde (T - S C^{-1}),

and the mirrored tilde set from S_tilde.  R's block-diagonal part
vanishes identically; it is asserted small and then zeroed so the
reflection data is exactly off-block-diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockPartition, Grid
from .errors import ConfigError, SpectralSingularityError, ToleranceError, WindingError
from .faddeev import (
    FROM_MINUS,
    FROM_PLUS,
    FaddeevTable,
    faddeev_table,
    solve_faddeev,
    wedge_complete,
)
from .wiener_hopf import ScalarFactorization, factorize_scalar

__all__ = [
    "CorrectedCoefficients",
    "DMatrices",
    "ScatteringData",
    "ScatteringMatrices",
    "TransitionMatrices",
    "corrected_coefficients",
    "d_matrices",
    "scattering_data",
    "scattering_matrices",
    "transition_matrices",
]

# name -> (march direction, sector restriction, analytic in the upper half)
_ANALYTIC_BLOCKS = {
    "l_pp": (FROM_PLUS, "plus", True),
    "r_mm": (FROM_MINUS, "minus", True),
    "r_pp": (FROM_MINUS, "plus", False),
    "l_mm": (FROM_PLUS, "minus", False),
}


@dataclass
class TransitionMatrices:
    """A_left and A_right on the real k grid, plus their continuations.

    ``route_gap`` is the largest disagreement between the quadrature
    route (accumulated transition integral) and the far-endpoint route
    (twisted final value), taken over both matrices and both the primal
    and dual marches; it bounds the truncation error of the window.
    ``inverse_defect`` is max |A_left A_right - I| and ``det_defect``
    the worse of |det - 1| for the two, both over the grid.
    """

    Q: np.ndarray
    grid: Grid
    part: BlockPartition
    k: np.ndarray
    A_l: np.ndarray
    A_r: np.ndarray
    route_gap: float
    inverse_defect: float
    det_defect: float
    k_ref: float = 2.0

    def analytic_block(self, name: str, kpts: np.ndarray) -> np.ndarray:
        """Evaluate one analytically continued corner block.

        ``name`` is one of "l_pp", "r_mm" (upper half plane) or "r_pp",
        "l_mm" (lower half plane); ``kpts`` may be any points of the
        closed half plane, including the real axis.  Each call is one
        restricted march batched over all the points.
        """
        try:
            direction, sector, upper = _ANALYTIC_BLOCKS[name]
        except KeyError:
            raise ConfigError(f"unknown analytic block {name!r}") from None
        kpts = np.atleast_1d(np.asarray(kpts, dtype=complex))
        if upper and np.any(kpts.imag < -1e-12):
            raise ConfigError(f"block {name} is only analytic for Im k >= 0")
        if not upper and np.any(kpts.imag > 1e-12):
            raise ConfigError(f"block {name} is only analytic for Im k <= 0")
        sol = solve_faddeev(
            self.Q, self.grid, self.part, direction,
            k=kpts, sector=sector, store="endpoints",
            k_ref=self.k_ref, method="stepwise",
        )
        sl = self.part.sector_slice("p" if sector == "plus" else "m")
        return sol.transition_integral[:, sl, :]

    def analytic_det(self, half: str, kpts: np.ndarray) -> np.ndarray:
        """det of the paired corner blocks, the pole/zero bookkeeper.

        "upper": det A_left_{++} det A_right_{--}; "lower": the mirror
        pair.  Zeros of the upper product in C+ (lower product in C-)
        are the discrete eigenvalues.
        """
        if half == "upper":
            names = ("l_pp", "r_mm")
        elif half == "lower":
            names = ("r_pp", "l_mm")
        else:
            raise ConfigError(f"half must be 'upper' or 'lower', got {half!r}")
        b1 = self.analytic_block(names[0], kpts)
        b2 = self.analytic_block(names[1], kpts)
        return np.linalg.det(b1) * np.linalg.det(b2)


def transition_matrices(table: FaddeevTable) -> TransitionMatrices:
    """Collect A_left / A_right from a marched table, with cross-checks.

    The quadrature route of the primal marches is taken as the value;
    the far-endpoint route and the dual marches (which accumulate the
    partner matrix) only feed the ``route_gap`` diagnostic.
    """
    A_l = table.M.transition_integral
    A_r = table.N.transition_integral
    route_gap = max(
        float(np.max(np.abs(A_l - table.M.transition_far))),
        float(np.max(np.abs(A_r - table.N.transition_far))),
        float(np.max(np.abs(A_l - table.N_dual.transition_integral))),
        float(np.max(np.abs(A_r - table.M_dual.transition_integral))),
    )
    eye = np.eye(table.part.n)
    inverse_defect = float(np.max(np.abs(A_l @ A_r - eye)))
    det_defect = max(
        float(np.max(np.abs(np.linalg.det(A_l) - 1.0))),
        float(np.max(np.abs(np.linalg.det(A_r) - 1.0))),
    )
    return TransitionMatrices(
        Q=table.Q, grid=table.grid, part=table.part, k=table.k,
        A_l=A_l, A_r=A_r,
        route_gap=route_gap, inverse_defect=inverse_defect,
        det_defect=det_defect, k_ref=table.k_ref,
    )


@dataclass
class DMatrices:
    """Twisted far limits of the two bounded column families.

    ``up_plus``/``dn_plus`` are the right/left limits of the upward
    family, ``dn_minus``/``up_minus`` the right/left limits of the
    downward one; "up"/"dn" in the name records the block triangularity
    (upper/lower) each limit comes out with.  ``center_route_gap`` is
    the largest disagreement between the marched center column (the
    stored one) and its reassembly from transition-matrix rows;
    ``cancellation_max`` is the largest center-column entry in the
    sector that triangularity forces to vanish, measured before it is
    zeroed.
    """

    part: BlockPartition
    k: np.ndarray
    up_plus: np.ndarray
    dn_plus: np.ndarray
    up_minus: np.ndarray
    dn_minus: np.ndarray
    center_route_gap: float
    cancellation_max: float


def d_matrices(
    trans: TransitionMatrices,
    table: FaddeevTable,
    *,
    cancel_tol: float = 1e-6,
) -> DMatrices:
    """Assemble the four far-limit matrices from a table and its A's.

    Outer stripes are exact columns of A_left/A_right (or unit columns)
    by the twisted asymptotics; center columns are taken from the
    marched wedge completions at the window ends (route a), checked
    against the wedge of transition-matrix rows with unit rows
    (route b), and their vanishing sector is verified below
    ``cancel_tol`` and then forced to exact zero.
    """
    part, grid = trans.part, trans.grid
    k = trans.k
    n, nk = part.n, k.size
    slp, slm, i0 = part.sl_plus, part.sl_minus, part.i_zero
    eye_rows_p = np.broadcast_to(np.eye(n)[slp, :], (nk, part.m_plus, n))
    eye_rows_m = np.broadcast_to(np.eye(n)[slm, :], (nk, part.m_minus, n))

    def twisted_center(omega: np.ndarray, x_end: float) -> np.ndarray:
        return omega * np.exp(-1j * np.multiply.outer(k, x_end * part.sigma_diag))

    last = grid.nx - 1
    # (matrix key, route-a center, route-b rows, sector forced to zero)
    jobs = {
        "up_plus": (
            twisted_center(table.omega_plus(last), grid.x_max),
            (trans.A_l[:, slp, :], eye_rows_m), slm,
        ),
        "dn_plus": (
            twisted_center(table.omega_plus(0), grid.x_min),
            (eye_rows_p, trans.A_r[:, slm, :]), slp,
        ),
        "dn_minus": (
            twisted_center(table.omega_minus(last), grid.x_max),
            (eye_rows_p, trans.A_l[:, slm, :]), slp,
        ),
        "up_minus": (
            twisted_center(table.omega_minus(0), grid.x_min),
            (trans.A_r[:, slp, :], eye_rows_m), slm,
        ),
    }
    centers = {}
    route_gap = 0.0
    cancellation = 0.0
    for name, (marched, (rows_p, rows_m), cancel_sl) in jobs.items():
        rebuilt = wedge_complete(rows_p, rows_m, part)
        route_gap = max(route_gap, float(np.max(np.abs(marched - rebuilt))))
        cancellation = max(cancellation, float(np.max(np.abs(marched[:, cancel_sl]))))
        center = marched.copy()
        center[:, cancel_sl] = 0.0
        centers[name] = center
    if cancellation > cancel_tol:
        raise ToleranceError(
            f"far-limit center column fails to vanish in its forced sector "
            f"(max {cancellation:.2e} > {cancel_tol:.0e}); the four marches "
            f"are inconsistent",
            stage="d-matrices",
        )

    unit_p = np.broadcast_to(np.eye(n)[:, slp], (nk, n, part.m_plus))
    unit_m = np.broadcast_to(np.eye(n)[:, slm], (nk, n, part.m_minus))

    def build(plus_cols, center, minus_cols):
        D = np.empty((nk, n, n), dtype=complex)
        D[:, :, slp] = plus_cols
        D[:, :, i0] = center
        D[:, :, slm] = minus_cols
        return D

    return DMatrices(
        part=part, k=k,
        up_plus=build(unit_p, centers["up_plus"], trans.A_r[:, :, slm]),
        dn_plus=build(trans.A_l[:, :, slp], centers["dn_plus"], unit_m),
        dn_minus=build(trans.A_r[:, :, slp], centers["dn_minus"], unit_m),
        up_minus=build(unit_p, centers["up_minus"], trans.A_l[:, :, slm]),
        center_route_gap=route_gap,
        cancellation_max=cancellation,
    )


@dataclass
class ScatteringMatrices:
    """S and its partner on the real k grid, with health diagnostics.

    ``route_defect`` compares the block-formula assembly against the
    direct triangular-solve routes; ``inverse_defect`` is
    max |S S_tilde - I|.  ``min_scale`` holds, per k, the smallest
    scale among all inverted objects (singular values of the corner
    blocks, magnitudes of the center scalars); ``spectral_singularities``
    lists the k nodes where it dips under the flag threshold.
    """

    part: BlockPartition
    k: np.ndarray
    S: np.ndarray
    S_tilde: np.ndarray
    route_defect: float
    inverse_defect: float
    min_scale: np.ndarray
    spectral_singularities: np.ndarray


def scattering_matrices(
    trans: TransitionMatrices,
    dm: DMatrices,
    *,
    flag_scale: float = 1e-6,
    fail_scale: float = 1e-12,
) -> ScatteringMatrices:
    """Assemble S and S_tilde from the per-block closed forms."""
    part = trans.part
    k = trans.k
    n, nk = part.n, k.size
    slp, slm, i0 = part.sl_plus, part.sl_minus, part.i_zero
    A_l, A_r = trans.A_l, trans.A_r

    blocks = {
        "A_l_pp": A_l[:, slp, slp], "A_r_mm": A_r[:, slm, slm],
        "A_r_pp": A_r[:, slp, slp], "A_l_mm": A_l[:, slm, slm],
    }
    scalars = {
        "up_plus": dm.up_plus[:, i0, i0], "dn_plus": dm.dn_plus[:, i0, i0],
        "up_minus": dm.up_minus[:, i0, i0], "dn_minus": dm.dn_minus[:, i0, i0],
    }
    min_scale = np.full(nk, np.inf)
    for b in blocks.values():
        min_scale = np.minimum(min_scale, np.linalg.svd(b, compute_uv=False)[:, -1])
    for s in scalars.values():
        min_scale = np.minimum(min_scale, np.abs(s))
    if np.any(min_scale < fail_scale):
        worst = int(np.argmin(min_scale))
        raise SpectralSingularityError(
            f"a transition block is singular at k = {k[worst]:.6g} "
            f"(scale {min_scale[worst]:.2e})",
            stage="scattering",
        )
    flagged = k[min_scale < flag_scale].real.astype(float)

    inv_Alpp = np.linalg.inv(blocks["A_l_pp"])
    inv_Armm = np.linalg.inv(blocks["A_r_mm"])
    inv_Arpp = np.linalg.inv(blocks["A_r_pp"])
    inv_Almm = np.linalg.inv(blocks["A_l_mm"])

    def center_col(D, sl):
        return D[:, sl, i0:i0 + 1]

    S = np.empty((nk, n, n), dtype=complex)
    S[:, slp, slp] = inv_Alpp
    S[:, slp, i0:i0 + 1] = inv_Alpp @ center_col(dm.up_minus, slp)
    S[:, slp, slm] = inv_Alpp @ A_l[:, slp, slm]
    S[:, i0:i0 + 1, slp] = (
        -(A_l[:, i0:i0 + 1, slp] @ inv_Alpp) / scalars["dn_plus"][:, None, None]
    )
    S[:, i0:i0 + 1, slm] = (
        -(A_r[:, i0:i0 + 1, slm] @ inv_Armm) / scalars["up_plus"][:, None, None]
    )
    S[:, i0, i0] = (
        scalars["dn_minus"]
        - (A_r[:, i0:i0 + 1, slm] @ inv_Armm @ center_col(dm.dn_minus, slm))[:, 0, 0]
    ) / scalars["up_plus"]
    S[:, slm, slp] = inv_Armm @ A_r[:, slm, slp]
    S[:, slm, i0:i0 + 1] = inv_Armm @ center_col(dm.dn_minus, slm)
    S[:, slm, slm] = inv_Armm

    T = np.empty((nk, n, n), dtype=complex)
    T[:, slp, slp] = inv_Arpp
    T[:, slp, i0:i0 + 1] = inv_Arpp @ center_col(dm.up_plus, slp)
    T[:, slp, slm] = inv_Arpp @ A_r[:, slp, slm]
    T[:, i0:i0 + 1, slp] = (
        -(A_r[:, i0:i0 + 1, slp] @ inv_Arpp) / scalars["dn_minus"][:, None, None]
    )
    T[:, i0:i0 + 1, slm] = (
        -(A_l[:, i0:i0 + 1, slm] @ inv_Almm) / scalars["up_minus"][:, None, None]
    )
    T[:, i0, i0] = (
        scalars["dn_plus"]
        - (A_l[:, i0:i0 + 1, slm] @ inv_Almm @ center_col(dm.dn_plus, slm))[:, 0, 0]
    ) / scalars["up_minus"]
    T[:, slm, slp] = inv_Almm @ A_l[:, slm, slp]
    T[:, slm, i0:i0 + 1] = inv_Almm @ center_col(dm.dn_plus, slm)
    T[:, slm, slm] = inv_Almm
    S_tilde = T

    route_defect = max(
        float(np.max(np.abs(np.linalg.solve(dm.up_plus, dm.dn_minus) - S))),
        float(np.max(np.abs(np.linalg.solve(dm.dn_plus, dm.up_minus) - S))),
        float(np.max(np.abs(np.linalg.solve(dm.dn_minus, dm.up_plus) - S_tilde))),
        float(np.max(np.abs(np.linalg.solve(dm.up_minus, dm.dn_plus) - S_tilde))),
    )
    inverse_defect = float(np.max(np.abs(S @ S_tilde - np.eye(n))))
    return ScatteringMatrices(
        part=part, k=k, S=S, S_tilde=S_tilde,
        route_defect=route_defect, inverse_defect=inverse_defect,
        min_scale=min_scale, spectral_singularities=flagged,
    )


@dataclass
class CorrectedCoefficients:
    """Block-diagonal/off-diagonal split of the scattering matrices.

    T and C are the transmission and correction factors of S (T upward
    analytic up to poles, C downward), T_tilde/C_tilde the mirrored
    pair from S_tilde, and R/R_tilde the reflection data, exactly
    off-block-diagonal after the (verified small) diagonal residue is
    zeroed.
    """

    part: BlockPartition
    k: np.ndarray
    T: np.ndarray
    C: np.ndarray
    T_tilde: np.ndarray
    C_tilde: np.ndarray
    R: np.ndarray
    R_tilde: np.ndarray
    diag_residual: float


def corrected_coefficients(
    sm: ScatteringMatrices,
    wh: ScalarFactorization,
    wh_tilde: ScalarFactorization,
    *,
    diag_tol: float = 1e-6,
) -> CorrectedCoefficients:
    """Split S / S_tilde using the central-entry factorizations.

    ``wh`` must factor S00 and ``wh_tilde`` S_tilde's center; both
    windings must vanish, otherwise the split does not exist in the
    assumed class and a WindingError is raised.
    """
    if wh.winding or wh_tilde.winding:
        raise WindingError(
            f"nonzero winding (w = {wh.winding}, w~ = {wh_tilde.winding}); "
            "the corrected-coefficient split assumes both vanish",
            stage="scattering",
        )
    part, k = sm.part, sm.k
    n, nk = part.n, k.size
    slp, slm, i0 = part.sl_plus, part.sl_minus, part.i_zero

    T = np.zeros((nk, n, n), dtype=complex)
    T[:, slp, slp] = sm.S[:, slp, slp]          # A_left_{++}^{-1}
    T[:, i0, i0] = wh.plus_values
    T[:, slm, slm] = sm.S[:, slm, slm]          # A_right_{--}^{-1}
    C = np.broadcast_to(np.eye(n), (nk, n, n)).astype(complex).copy()
    C[:, i0, i0] = wh.minus_values

    T_tilde = np.zeros((nk, n, n), dtype=complex)
    T_tilde[:, slp, slp] = sm.S_tilde[:, slp, slp]   # A_right_{++}^{-1}
    T_tilde[:, i0, i0] = wh_tilde.minus_values
    T_tilde[:, slm, slm] = sm.S_tilde[:, slm, slm]   # A_left_{--}^{-1}
    C_tilde = np.broadcast_to(np.eye(n), (nk, n, n)).astype(complex).copy()
    C_tilde[:, i0, i0] = wh_tilde.plus_values

    R = sm.S.copy()
    R[:, :, i0] /= wh.minus_values[:, None]      # S C^{-1}
    R = T - R
    R[:, i0, :] *= wh_tilde.plus_values[:, None]  # left factor C_tilde

    R_tilde = sm.S_tilde.copy()
    R_tilde[:, :, i0] /= wh_tilde.plus_values[:, None]
    R_tilde = T_tilde - R_tilde
    R_tilde[:, i0, :] *= wh.minus_values[:, None]

    diag_residual = 0.0
    for A in (R, R_tilde):
        for sl in (slp, slm):
            diag_residual = max(diag_residual, float(np.max(np.abs(A[:, sl, sl]))))
        diag_residual = max(diag_residual, float(np.max(np.abs(A[:, i0, i0]))))
        A[:, slp, slp] = 0.0
        A[:, slm, slm] = 0.0
        A[:, i0, i0] = 0.0
    if diag_residual > diag_tol:
        raise ToleranceError(
            f"reflection data has block-diagonal residue {diag_residual:.2e} "
            f"(> {diag_tol:.0e}); transmission split is inconsistent",
            stage="scattering",
        )
    return CorrectedCoefficients(
        part=part, k=k, T=T, C=C, T_tilde=T_tilde, C_tilde=C_tilde,
        R=R, R_tilde=R_tilde, diag_residual=diag_residual,
    )


@dataclass
class ScatteringData:
    """Everything the inverse problem consumes, on one k grid.

    ``corrected`` is None exactly when a nonzero winding blocks the
    transmission split (the factorizations themselves are always kept,
    deflated by the recorded winding).  ``eigen_plus``/``eigen_minus``
    hold the discrete records (eigenvalue, residue, norming matrix) of
    the upper/lower half planes; empty when the search was skipped or
    found nothing.
    """

    trans: TransitionMatrices
    d: DMatrices
    sm: ScatteringMatrices
    wh: ScalarFactorization
    wh_tilde: ScalarFactorization
    corrected: CorrectedCoefficients | None
    eigen_plus: list = field(default_factory=list)
    eigen_minus: list = field(default_factory=list)

    @property
    def part(self) -> BlockPartition:
        return self.trans.part

    @property
    def k(self) -> np.ndarray:
        return self.trans.k

    @property
    def S(self) -> np.ndarray:
        return self.sm.S

    @property
    def S_tilde(self) -> np.ndarray:
        return self.sm.S_tilde

    @property
    def winding(self) -> int:
        return self.wh.winding

    @property
    def winding_tilde(self) -> int:
        return self.wh_tilde.winding

    @property
    def spectral_singularities(self) -> np.ndarray:
        return self.sm.spectral_singularities


def scattering_data(
    Q: np.ndarray,
    grid: Grid,
    part: BlockPartition,
    *,
    k_ref: float = 2.0,
    method: str = "auto",
    with_discrete: bool = True,
    im_floor: float = 1e-3,
    taper_fraction: float = 0.1,
    end_tol: float = 1e-4,
) -> ScatteringData:
    """March, assemble, factorize, and (optionally) hunt eigenvalues.

    One-call driver for the whole direct problem at real k.  The
    discrete search and the norming extraction are skipped when
    ``with_discrete`` is false or when a nonzero winding already rules
    out the downstream inverse problem.
    """
    table = faddeev_table(
        Q, grid, part, store="endpoints", k_ref=k_ref, method=method
    )
    trans = transition_matrices(table)
    dm = d_matrices(trans, table)
    sm = scattering_matrices(trans, dm)
    k = trans.k.real
    # Eigenvalues are Blaschke zeros of the central symbols, so the hunt
    # has to run before the factorization can be set up correctly.
    spec = None
    zeros_plus: tuple = ()
    zeros_minus: tuple = ()
    if with_discrete:
        from .spectrum import discrete_spectrum

        spec = discrete_spectrum(trans, im_floor=im_floor)
        zeros_plus = tuple(spec.zeros_plus)
        zeros_minus = tuple(spec.zeros_minus)
    wh = factorize_scalar(
        k, sm.S[:, part.i_zero, part.i_zero],
        taper_fraction=taper_fraction, end_tol=end_tol,
        zeros_plus=zeros_plus,
    )
    wh_tilde = factorize_scalar(
        k, sm.S_tilde[:, part.i_zero, part.i_zero],
        taper_fraction=taper_fraction, end_tol=end_tol,
        zeros_minus=zeros_minus,
    )
    blocked = bool(wh.winding or wh_tilde.winding)
    corrected = None if blocked else corrected_coefficients(sm, wh, wh_tilde)
    data = ScatteringData(
        trans=trans, d=dm, sm=sm, wh=wh, wh_tilde=wh_tilde, corrected=corrected,
    )
    if spec is not None and not blocked:
        from .spectrum import residues_and_norming

        data.eigen_plus, data.eigen_minus = residues_and_norming(
            trans, wh, wh_tilde, spec
        )
    return data
