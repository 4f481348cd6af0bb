"""Faddeev-normalized wavefunctions of v_x = (ik Sigma + Q) v.

Definitions
-----------
Two matrix solutions are distinguished by their normalization,

    M(x, k) -> I  as  x -> +inf,      N(x, k) -> I  as  x -> -inf,

both satisfying  W_x = ik [Sigma, W] + Q W,  together with their duals
(inverse transposes of nothing -- literal inverses)

    Mu := M^{-1},  Nu := N^{-1},   Wu_x = ik [Sigma, Wu] - Wu Q.

Because tr Q = 0 and the commutator is trace-free, det M = det N = 1
identically.  Transition matrices arise as phase-twisted limits: with
W_M(x) := e^{-ikx Sigma} M e^{ikx Sigma},

    W_M(-inf) = A_left  = I - int e^{-iky Sigma} (Q M) e^{iky Sigma} dy,
    W_N(+inf) = A_right = I + int e^{-iky Sigma} (Q N) e^{iky Sigma} dy,

and the dual marches accumulate the partners (Mu -> A_right with the
integrand +Mu Q, Nu -> A_left with -Nu Q).  A_left A_right = I.

Numerics
--------
Each grid cell is propagated by a fourth-order splitting of
exp(ik Sigma dx + Q dx) built from a symmetric triple jump of midpoint
steps: with w1 = 1/(2 - 2^{1/3}), w0 = 1 - 2 w1, the forward-cell
operator is

    G = P(h1) E(c3) P(h2) E(c2) P(h2) E(c1) P(h1),
    P(t) = e^{ik t Sigma},  h1 = w1 d/2,  h2 = (w1 + w0) d/2,
    E(c) = exp(w d Q(c)),   w = w1, w0, w1 at  c1, c2, c3,

where c1, c2, c3 are the midpoints of the three sub-spans of the cell.
The potential factors are k-independent, so they are precomputed once
(truncated-Taylor exponentials, machine-exact at these step sizes) and
shared across all k; the phase factors are diagonal scalings.  Faddeev
normalization is kept by marching the phase-free objects directly,

    M(x_l) = G^{-1} M(x_r) e^{ik d Sigma},    (backward sweep)
    N(x_r) = G N(x_l) e^{-ik d Sigma},        (forward sweep)

and mirrored updates for the duals.  Oscillation stiffness is handled
by splitting each cell into ceil(|k| / k_ref) sub-steps, with k grouped
into buckets of equal sub-step count so everything stays vectorized.

At complex k only sector-restricted columns (rows, for duals) stay
bounded; the restriction is legitimate because right-multiplication by
the diagonal Sigma acts per column, so each column solves a closed ODE.

The transition integrals are accumulated during the sweep by a
product-rule Simpson variant: on each two-cell panel the smooth factor
is fitted by the interpolating quadratic and integrated against
e^{-ik c y} exactly (c in {0, +-1, +-2} is the sector gap), so the
quadrature error does not grow with k.  At complex k only the
gap-zero entries of a restricted sweep are meaningful and only they
are accumulated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .blocks import BlockPartition, Grid
from .errors import ConfigError
from .wedge import wedge_lift

logger = logging.getLogger(__name__)

FROM_PLUS = "from_plus_infinity"
FROM_MINUS = "from_minus_infinity"

_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1
_TAYLOR_TERMS = 12


# ---------------------------------------------------------------------------
# small dense helpers
# ---------------------------------------------------------------------------

def _expm_taylor(A: np.ndarray) -> np.ndarray:
    """exp(A) by Horner-evaluated Taylor series, batched over leading axes.

    Accurate to machine precision for ||A|| up to ~0.3, which the cell
    sub-steps guarantee by construction; a single scaling-squaring round
    covers the occasional larger block.
    """
    norm = float(np.max(np.sum(np.abs(A), axis=-1))) if A.size else 0.0
    squarings = 0
    while norm > 0.25:
        A = A * 0.5
        norm *= 0.5
        squarings += 1
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    T = eye + A / _TAYLOR_TERMS
    for j in range(_TAYLOR_TERMS - 1, 0, -1):
        T = eye + (A @ T) / j
    for _ in range(squarings):
        T = T @ T
    return T


def substep_counts(k: np.ndarray, k_ref: float = 2.0) -> np.ndarray:
    """Sub-steps per cell for each k: ceil(|k| / k_ref), at least 1."""
    counts = np.ceil(np.abs(np.asarray(k)) / k_ref).astype(int)
    return np.maximum(counts, 1)


# ---------------------------------------------------------------------------
# product-rule panel weights
# ---------------------------------------------------------------------------

def _filon_shape_functions(theta: np.ndarray):
    """Dimensionless moments a0, a1, a2 of the quadratic product rule.

    a_p = (1/h^{p+1}) int_{-h}^{h} (t/h)^p ... concretely the three
    moment integrals int t^p e^{-i theta t / h} dt scaled by h^{-(p+1)};
    evaluated by series for small |theta| to dodge cancellation.
    """
    theta = np.asarray(theta, dtype=complex)
    small = np.abs(theta) < 0.5
    th = np.where(small, 0.5, theta)  # safe dummy for the closed forms
    sin, cos = np.sin(th), np.cos(th)
    a0 = 2.0 * sin / th
    a1 = -2j * (sin - th * cos) / th**2
    a2 = 2.0 * (2.0 * cos / th**2 + sin / th - 2.0 * sin / th**3)
    t2 = theta * theta
    a0_s = (2.0 - t2 / 3.0 + t2**2 / 60.0 - t2**3 / 2520.0
            + t2**4 / 181440.0 - t2**5 / 19958400.0)
    a1_s = -2j * theta * (1.0 / 3.0 - t2 / 30.0 + t2**2 / 840.0
                          - t2**3 / 45360.0 + t2**4 / 3991680.0)
    a2_s = (2.0 / 3.0 - t2 / 5.0 + t2**2 / 84.0 - t2**3 / 3240.0
            + t2**4 / 221760.0 - t2**5 / 23587200.0)
    a0 = np.where(small, a0_s, a0)
    a1 = np.where(small, a1_s, a1)
    a2 = np.where(small, a2_s, a2)
    return a0, a1, a2


def oscillatory_panel_weights(theta: np.ndarray):
    """Weights (w_minus, w_center, w_plus) for a 3-node panel of half-width h.

    int_{-h}^{h} f(t) e^{-i theta t/h} dt ~ h (w_m f(-h) + w_c f(0) + w_p f(h));
    theta = k c h.  At theta = 0 this is composite Simpson (1/3, 4/3, 1/3).
    """
    a0, a1, a2 = _filon_shape_functions(theta)
    w_m = 0.5 * (a2 - a1)
    w_c = a0 - a2
    w_p = 0.5 * (a2 + a1)
    return w_m, w_c, w_p


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

@dataclass
class FaddeevSolution:
    """March results for one wavefunction family on one k set.

    ``values`` has shape (n_stored, nk, n, nc) for a primal family and
    (n_stored, nk, nr, n) for a dual; nc/nr < n when a sector
    restriction was requested.  ``transition_integral`` is the
    accumulated transition matrix (A_left for M and Nu, A_right for N
    and Mu, restricted alike); ``transition_far`` is the independent
    far-endpoint route to the same object (phase-twisted final value;
    at complex k only its gap-zero entries are meaningful).
    """

    part: BlockPartition
    x: np.ndarray
    k: np.ndarray
    direction: str
    dual: bool
    sector: str | None
    store_index: np.ndarray
    values: np.ndarray
    transition_integral: np.ndarray
    transition_far: np.ndarray

    @property
    def x_stored(self) -> np.ndarray:
        return self.x[self.store_index]

    def at(self, x_index: int) -> np.ndarray:
        pos = np.nonzero(self.store_index == x_index)[0]
        if pos.size == 0:
            raise ConfigError(f"x index {x_index} was not stored")
        return self.values[pos[0]]


def _column_indices(part: BlockPartition, sector: str | None) -> np.ndarray:
    if sector is None:
        return np.arange(part.n)
    return np.arange(part.n)[part.sector_slice(
        {"plus": "p", "minus": "m", "zero": "0"}.get(sector, sector)
    )]


@dataclass
class _CellFactors:
    """Per-bucket precomputed potential exponentials.

    E[cell, sub, j] = exp(w_j d Q(c_j)) for the three midpoints of each
    sub-step, plus inverses; d = dx / subs.
    """

    subs: int
    E: np.ndarray
    E_inv: np.ndarray


def _potential_factors(
    Q_spline, x: np.ndarray, subs: int, need_forward: bool, need_inverse: bool
) -> _CellFactors:
    dx = x[1] - x[0]
    d = dx / subs
    ncell = len(x) - 1
    offs = np.array([0.5 * _W1, 0.5, 1.0 - 0.5 * _W1]) * d
    sub_origin = x[:-1, None] + d * np.arange(subs)[None, :]
    mids = sub_origin[:, :, None] + offs[None, None, :]  # (ncell, subs, 3)
    Qm = Q_spline(mids.ravel())  # (ncell*subs*3, n, n)
    n = Qm.shape[-1]
    Qm = Qm.reshape(ncell, subs, 3, n, n)
    w = np.array([_W1, _W0, _W1]) * d
    A = w[None, None, :, None, None] * Qm
    E = _expm_taylor(A) if need_forward else None
    E_inv = _expm_taylor(-A) if need_inverse else None
    return _CellFactors(subs=subs, E=E, E_inv=E_inv)


# ---------------------------------------------------------------------------
# the march
# ---------------------------------------------------------------------------

def solve_faddeev(
    Q: np.ndarray,
    grid: Grid,
    part: BlockPartition,
    direction: str,
    dual: bool = False,
    *,
    k: np.ndarray | None = None,
    sector: str | None = None,
    store: str | np.ndarray = "endpoints",
    k_ref: float = 2.0,
    method: str = "auto",
) -> FaddeevSolution:
    """March one wavefunction family across the grid.

    Parameters
    ----------
    Q : ndarray, shape (nx, n, n)
        Potential samples on grid.x_nodes.
    direction : "from_plus_infinity" or "from_minus_infinity"
        Which normalization: M-type (identity at the right end, swept
        right to left) or N-type (identity at the left end).
    dual : bool
        March the inverse family instead (row-normalized).
    k : ndarray, optional
        Spectral points; defaults to grid.k_nodes.  May be complex, in
        which case a ``sector`` restriction is required to keep the
        marched columns/rows the bounded ones.
    sector : "plus" | "minus" | None
        Restrict to the columns (primal) or rows (dual) of one outer
        sector.
    store : "endpoints" | "all" | index array
        Which x nodes to keep in ``values``.
    k_ref : float
        Oscillation budget per cell sub-step (sub-steps = ceil|k|/k_ref).
    method : "auto" | "scan" | "stepwise"
        "stepwise" applies the cell propagators one at a time, renormalizing
        each cell, and is the only admissible path off the real axis.
        "scan" composes per-cell transfer operators in bulk and takes
        cumulative products by a blocked parallel prefix; identical results
        on the real axis at a fraction of the interpreter overhead.
        "auto" picks "scan" exactly when every k is real.
    """
    if direction not in (FROM_PLUS, FROM_MINUS):
        raise ConfigError(f"unknown direction {direction!r}")
    x = grid.x_nodes
    nx = grid.nx
    Q = np.asarray(Q, dtype=complex)
    if Q.shape != (nx, part.n, part.n):
        raise ConfigError(f"Q must have shape {(nx, part.n, part.n)}, got {Q.shape}")
    k = grid.k_nodes.astype(complex) if k is None else np.atleast_1d(np.asarray(k, dtype=complex))
    if np.any(np.abs(k.imag) > 1e-12) and sector is None:
        raise ConfigError("complex k requires a sector restriction (see module notes)")

    if isinstance(store, str):
        if store == "endpoints":
            store_index = np.array([0, nx - 1])
        elif store == "all":
            store_index = np.arange(nx)
        else:
            raise ConfigError(f"unknown store policy {store!r}")
    else:
        store_index = np.unique(np.asarray(store, dtype=int))
        if store_index[0] < 0 or store_index[-1] >= nx:
            raise ConfigError("store indices out of range")

    spline = CubicSpline(x, Q, axis=0)
    cols = _column_indices(part, sector)
    n = part.n
    nc = len(cols)
    nk = len(k)

    values = np.empty(
        (len(store_index), nk) + ((nc, n) if dual else (n, nc)), dtype=complex
    )
    trans_int = np.empty_like(values[0])
    trans_far = np.empty_like(values[0])

    real_axis = not np.any(np.abs(k.imag) > 1e-12)
    if method == "auto":
        method = "scan" if real_axis else "stepwise"
    if method == "scan" and not real_axis:
        raise ConfigError(
            "the scan path multiplies full transfer operators, which mixes "
            "growing and decaying directions off the real axis; use stepwise"
        )
    if method not in ("scan", "stepwise"):
        raise ConfigError(f"unknown method {method!r}")

    counts = substep_counts(k, k_ref)
    for subs in np.unique(counts):
        ksel = np.nonzero(counts == subs)[0]
        kb = k[ksel]
        factors = _potential_factors(
            spline, x, int(subs),
            need_forward=(direction == FROM_MINUS) != dual,
            need_inverse=(direction == FROM_PLUS) != dual,
        )
        bucket = _march_bucket_scan if method == "scan" else _march_bucket
        vals_b, ti_b, tf_b = bucket(
            Q, x, kb, part, direction, dual, cols, factors, store_index
        )
        values[:, ksel] = vals_b
        trans_int[ksel] = ti_b
        trans_far[ksel] = tf_b

    return FaddeevSolution(
        part=part,
        x=x,
        k=k,
        direction=direction,
        dual=dual,
        sector=sector,
        store_index=store_index,
        values=values,
        transition_integral=trans_int,
        transition_far=trans_far,
    )


def _march_bucket(Q, x, k, part, direction, dual, cols, factors, store_index):
    n = part.n
    nk = len(k)
    nc = len(cols)
    sigma = part.sigma_diag
    nx = len(x)
    dx = x[1] - x[0]
    subs = factors.subs
    d = dx / subs
    backward = direction == FROM_PLUS

    # diagonal phase vectors shared by every sub-step of the bucket
    th1 = 0.5 * _W1 * d * k  # (nk,)
    th2 = 0.5 * (_W1 + _W0) * d * k
    sgn = -1.0 if backward else 1.0
    # primal sweeps scale rows by e^{sgn i th sigma}; dual sweeps hit the
    # conjugate operator from the right, so their column phases flip sign
    psgn = -sgn if dual else sgn
    p1 = np.exp(psgn * 1j * th1[:, None] * sigma[None, :])
    p2 = np.exp(psgn * 1j * th2[:, None] * sigma[None, :])
    # Faddeev re-normalization per sub-step
    if not dual:
        tail = np.exp(-sgn * 1j * d * k[:, None] * sigma[None, cols])[:, None, :]
    else:
        tail = np.exp(sgn * 1j * d * k[:, None] * sigma[None, cols])[:, :, None]

    if dual:
        V = np.zeros((nk, nc, n), dtype=complex)
        V[:, np.arange(nc), cols] = 1.0
    else:
        V = np.zeros((nk, n, nc), dtype=complex)
        V[:, cols, np.arange(nc)] = 1.0

    store_set = {int(i): pos for pos, i in enumerate(store_index)}
    vals = np.empty((len(store_index), nk) + V.shape[1:], dtype=complex)

    # transition-integral bookkeeping: Filon panel weights per gap class
    gap = sigma[:, None] - sigma[None, :]
    if dual:
        gap = gap[cols, :]
    else:
        gap = gap[:, cols]
    complex_k = bool(np.any(np.abs(k.imag) > 1e-12))
    classes = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    class_of = np.searchsorted(classes, np.round(gap))
    wm_c, wc_c, wp_c = oscillatory_panel_weights(
        k[:, None] * classes[None, :] * dx
    )  # (nk, 5)
    live = np.ones_like(gap, dtype=bool) if not complex_k else (gap == 0.0)
    w_minus = np.where(live, wm_c[:, class_of], 0.0)
    w_center = np.where(live, wc_c[:, class_of], 0.0)
    w_plus = np.where(live, wp_c[:, class_of], 0.0)
    accum = np.zeros((nk,) + V.shape[1:], dtype=complex)
    ring = {}

    def integrand(i, Vi):
        if dual:
            return Vi @ Q[i]
        return Q[i] @ Vi

    def panel(i_mid):
        # panel [x_{i-1}, x_{i+1}] centered at x_{i_mid}
        f_m, f_c, f_p = ring[i_mid - 1], ring[i_mid], ring[i_mid + 1]
        combo = w_minus * f_m + w_center * f_c + w_plus * f_p
        phase = np.exp(-1j * k[:, None, None] * gap[None] * x[i_mid])
        if complex_k:
            phase = np.where(live[None], phase, 0.0)
        accum[...] += dx * phase * combo

    order = range(nx - 1, -1, -1) if backward else range(nx)
    first = True
    for i in order:
        if not first:
            V = _cell_update(
                V, factors, i if backward else i - 1, subs, p1, p2, tail, backward, dual
            )
        first = False
        if i in store_set:
            vals[store_set[i]] = V
        ring[i] = integrand(i, V)
        mid = i + 1 if backward else i - 1
        if (backward and i % 2 == 0 and i + 2 < nx) or (
            not backward and i % 2 == 0 and i - 2 >= 0
        ):
            panel(mid)
        ring.pop(i + 2 if backward else i - 2, None)

    # I -/+ integral: M and Nu carry the minus sign, N and Mu the plus
    eye_r = np.zeros(V.shape[1:], dtype=complex)
    if dual:
        eye_r[np.arange(nc), cols] = 1.0
    else:
        eye_r[cols, np.arange(nc)] = 1.0
    minus_family = (direction == FROM_PLUS and not dual) or (
        direction == FROM_MINUS and dual
    )
    trans_int = eye_r[None] + (-1.0 if minus_family else 1.0) * accum

    # far-endpoint route: phase-twist the final value
    x_far = x[0] if backward else x[-1]
    far_phase = np.exp(-1j * k[:, None, None] * gap[None] * x_far)
    if complex_k:
        far_phase = np.where(live[None], far_phase, 0.0)
    trans_far = far_phase * V

    return vals, trans_int, trans_far


def _cell_update(V, factors, cell, subs, p1, p2, tail, backward, dual):
    E = factors.E
    E_inv = factors.E_inv
    if backward and not dual:
        # M(x_l) = G^{-1} M(x_r) e^{ik d Sigma}, sub-step by sub-step
        for s in range(subs - 1, -1, -1):
            V = p1[:, :, None] * V
            V = E_inv[cell, s, 2] @ V
            V = p2[:, :, None] * V
            V = E_inv[cell, s, 1] @ V
            V = p2[:, :, None] * V
            V = E_inv[cell, s, 0] @ V
            V = p1[:, :, None] * V
            V = V * tail
    elif backward and dual:
        # Mu(x_l) = e^{-ik d Sigma} Mu(x_r) G
        for s in range(subs - 1, -1, -1):
            V = V * p1[:, None, :]
            V = V @ E[cell, s, 2]
            V = V * p2[:, None, :]
            V = V @ E[cell, s, 1]
            V = V * p2[:, None, :]
            V = V @ E[cell, s, 0]
            V = V * p1[:, None, :]
            V = tail * V
    elif not backward and not dual:
        # N(x_r) = G N(x_l) e^{-ik d Sigma}
        for s in range(subs):
            V = p1[:, :, None] * V
            V = E[cell, s, 0] @ V
            V = p2[:, :, None] * V
            V = E[cell, s, 1] @ V
            V = p2[:, :, None] * V
            V = E[cell, s, 2] @ V
            V = p1[:, :, None] * V
            V = V * tail
    else:
        # Nu(x_r) = e^{ik d Sigma} Nu(x_l) G^{-1}
        for s in range(subs):
            V = V * p1[:, None, :]
            V = V @ E_inv[cell, s, 0]
            V = V * p2[:, None, :]
            V = V @ E_inv[cell, s, 1]
            V = V * p2[:, None, :]
            V = V @ E_inv[cell, s, 2]
            V = V * p1[:, None, :]
            V = tail * V
    return V


# ---------------------------------------------------------------------------
# scan path: bulk operator composition + blocked cumulative products
# ---------------------------------------------------------------------------

def _compose_cell_operators(factors, k, sigma, x, inverse_chain: bool):
    """Phase-twisted full-cell transfer operators, all cells at once.

    These are the cell operators of W(x) = e^{-ikx Sigma} V(x) e^{ikx Sigma}:
    inverse_chain=True builds  e^{-ik x_l Sigma} [G_0^{-1} ... G_{m-1}^{-1}]
    e^{+ik x_r Sigma}  (the operator that advances W for the backward primal
    and the forward dual); False builds  e^{-ik x_r Sigma} [G_{m-1} ... G_0]
    e^{+ik x_l Sigma}.  In this frame a cell whose potential factors are
    exactly the identity has exactly the identity operator -- no phase ever
    drifts through quiescent regions.  Returns (ncell, nk, n, n), or None
    when every cell is trivial.
    """
    subs = factors.subs
    d = (x[1] - x[0]) / subs
    n = len(sigma)
    E = factors.E_inv if inverse_chain else factors.E
    eye = np.eye(n, dtype=complex)
    nontrivial = np.nonzero(np.any(E != eye, axis=(1, 2, 3, 4)))[0]
    if nontrivial.size == 0:
        return None

    th1 = 0.5 * _W1 * d * k
    th2 = 0.5 * (_W1 + _W0) * d * k
    s_ = sigma[None, :]
    if inverse_chain:
        p1 = np.exp(-1j * th1[:, None] * s_)
        p2 = np.exp(-1j * th2[:, None] * s_)
        # G^{-1} = [E1i . (p1 x p2)] @ E2i @ [E3i . (p2 x p1)]
        left_idx, right_idx = 0, 2
    else:
        p1 = np.exp(1j * th1[:, None] * s_)
        p2 = np.exp(1j * th2[:, None] * s_)
        # G = [E3 . (p1 x p2)] @ E2 @ [E1 . (p2 x p1)]
        left_idx, right_idx = 2, 0
    phi_lr = p1[:, :, None] * p2[:, None, :]  # (nk, n, n)
    phi_rl = p2[:, :, None] * p1[:, None, :]
    Ent = E[nontrivial]
    C = None
    order = range(subs) if inverse_chain else range(subs - 1, -1, -1)
    for s in order:
        A = Ent[:, s, left_idx][:, None] * phi_lr[None]
        B = Ent[:, s, right_idx][:, None] * phi_rl[None]
        G = A @ (Ent[:, s, 1][:, None] @ B)
        C = G if C is None else C @ G
    # boundary phases of the twisted frame
    x_l = x[:-1][nontrivial]
    x_r = x[1:][nontrivial]
    if inverse_chain:
        rows = np.exp(-1j * x_l[:, None, None] * k[None, :, None] * s_[None])
        cols = np.exp(1j * x_r[:, None, None] * k[None, :, None] * s_[None])
    else:
        rows = np.exp(-1j * x_r[:, None, None] * k[None, :, None] * s_[None])
        cols = np.exp(1j * x_l[:, None, None] * k[None, :, None] * s_[None])
    C = C * (rows[:, :, :, None] * cols[:, :, None, :])
    if nontrivial.size == len(x) - 1:
        return C
    out = np.empty((len(x) - 1, len(k), n, n), dtype=complex)
    out[:] = eye
    out[nontrivial] = C
    return out


def _blocked_cumulative(C: np.ndarray, new_on_left: bool, block: int = 16):
    """Exclusive cumulative products P_0 = I, P_j = compose(C_{j-1}, P_{j-1}).

    compose puts the new factor on the chosen side.  C has shape
    (ncell, ..., n, n); the result has shape (ncell + 1, ..., n, n).
    Work is a short in-block parallel prefix plus one small Python loop
    over blocks, so the interpreter cost is O(ncell / block).
    """
    ncell = C.shape[0]
    n = C.shape[-1]
    eye = np.eye(n, dtype=C.dtype)
    nb = -(-ncell // block)
    pad = nb * block - ncell
    if pad:
        filler = np.broadcast_to(eye, (pad,) + C.shape[1:])
        C = np.concatenate([C, filler], axis=0)
    L = C.reshape((nb, block) + C.shape[1:]).copy()
    step = 1
    while step < block:
        if new_on_left:
            L[:, step:] = L[:, step:] @ L[:, :-step]
        else:
            L[:, step:] = L[:, :-step] @ L[:, step:]
        step *= 2
    totals = L[:, -1]
    carries = np.empty_like(totals, shape=(nb + 1,) + totals.shape[1:])
    carries[0] = eye
    for b in range(nb):
        carries[b + 1] = (
            totals[b] @ carries[b] if new_on_left else carries[b] @ totals[b]
        )
    if new_on_left:
        P_in = L @ carries[:-1, None]
    else:
        P_in = carries[:-1, None] @ L
    P_in = P_in.reshape((nb * block,) + C.shape[1:])[:ncell]
    out = np.empty_like(C, shape=(ncell + 1,) + C.shape[1:])
    out[0] = eye
    out[1:] = P_in
    return out


def _march_bucket_scan(Q, x, k, part, direction, dual, cols, factors, store_index):
    """Same contract as :func:`_march_bucket`, via cumulative operator products.

    The wrong-side Hillis-Steele update inside a block never crosses a block
    boundary, so associativity is all that is used; real k keeps every factor
    bounded, which is what makes the full-operator products well conditioned.
    """
    n = part.n
    sigma = part.sigma_diag
    nx = len(x)
    ncell = nx - 1
    dx = x[1] - x[0]
    nk_total = len(k)
    backward = direction == FROM_PLUS
    inverse_chain = backward != dual  # M and Nu ride the inverted factors

    gap_full = sigma[:, None] - sigma[None, :]
    gap = gap_full[cols, :] if dual else gap_full[:, cols]
    classes = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    class_of = np.searchsorted(classes, np.round(gap))

    nc = len(cols)
    out_shape = (nk_total,) + ((nc, n) if dual else (n, nc))
    vals = np.empty((len(store_index),) + out_shape, dtype=complex)
    trans_int = np.empty(out_shape, dtype=complex)
    trans_far = np.empty(out_shape, dtype=complex)

    chunk = max(8, int(3e6 // (ncell * n * n)))
    mids = np.arange(1, nx - 1, 2)
    eye_r = np.zeros(out_shape[1:], dtype=complex)
    if dual:
        eye_r[np.arange(nc), cols] = 1.0
    else:
        eye_r[cols, np.arange(nc)] = 1.0
    minus_family = (direction == FROM_PLUS and not dual) or (
        direction == FROM_MINUS and dual
    )

    for k0i in range(0, nk_total, chunk):
        kc = k[k0i : k0i + chunk]
        nkc = len(kc)
        C = _compose_cell_operators(factors, kc, sigma, x, inverse_chain)
        if C is None:
            # identically zero potential: W == I everywhere, exactly
            vals[:, k0i : k0i + nkc] = eye_r
            trans_int[k0i : k0i + nkc] = eye_r
            trans_far[k0i : k0i + nkc] = eye_r
            continue
        if backward:
            C = C[::-1]
        P = _blocked_cumulative(C, new_on_left=not dual)
        del C
        if backward:
            P = P[::-1]
        # P[j] is the twisted-frame value W at node j (W = I at the
        # normalization end); the Faddeev function itself is the sandwich
        # e^{ikx Sigma} W e^{-ikx Sigma}, a pure entrywise phase.
        W_far = P[0 if backward else -1]
        sandwich = np.exp(
            1j * np.multiply.outer(x, kc)[:, :, None, None] * gap[None, None]
        )
        V = (P[:, :, cols, :] if dual else P[:, :, :, cols]) * sandwich
        del P, sandwich

        vals[:, k0i : k0i + nkc] = V[store_index]

        # transition integral over two-cell panels, all panels at once
        F = Q[:, None] @ V if not dual else V @ Q[:, None]
        wm, wc, wp = oscillatory_panel_weights(
            kc[:, None] * classes[None, :] * dx
        )
        w_minus = wm[:, class_of]
        w_center = wc[:, class_of]
        w_plus = wp[:, class_of]
        combo = (
            w_minus[None] * F[mids - 1]
            + w_center[None] * F[mids]
            + w_plus[None] * F[mids + 1]
        )
        ph = np.exp(
            -1j * np.multiply.outer(x[mids], kc)[:, :, None, None] * gap[None, None]
        )
        accum = dx * np.sum(ph * combo, axis=0)
        trans_int[k0i : k0i + nkc] = eye_r[None] + (
            -1.0 if minus_family else 1.0
        ) * accum

        trans_far[k0i : k0i + nkc] = W_far[:, cols, :] if dual else W_far[:, :, cols]
        del V, F, combo, ph

    return vals, trans_int, trans_far


# ---------------------------------------------------------------------------
# Volterra defect (integral-equation residual, used as an oracle check)
# ---------------------------------------------------------------------------

def volterra_defect(
    sol: FaddeevSolution, Q: np.ndarray, x_index: int, k_index: int
) -> float:
    """Residual of the defining Volterra equation at one (x, k) point.

    For the M family:  M(x) - I + int_x^{xmax} e^{ik(x-y) Sigma} (Q M)(y)
    e^{-ik(x-y) Sigma} dy  (mirrored for N).  Requires store="all" and a
    primal, unrestricted, real-k solution.
    """
    from scipy.integrate import simpson

    if sol.dual or sol.sector is not None:
        raise ConfigError("volterra defect needs a primal unrestricted solution")
    if len(sol.store_index) != len(sol.x):
        raise ConfigError("volterra defect needs store='all'")
    k = sol.k[k_index]
    if abs(k.imag) > 1e-12:
        raise ConfigError("volterra defect is evaluated on the real axis")
    x = sol.x
    n = sol.part.n
    sigma = sol.part.sigma_diag
    gap = sigma[:, None] - sigma[None, :]
    W = sol.values[:, k_index]  # (nx, n, n)
    QW = np.einsum("yab,ybc->yac", np.asarray(Q, dtype=complex), W)
    if sol.direction == FROM_PLUS:
        ys = slice(x_index, len(x))
        sign = +1.0
    else:
        ys = slice(0, x_index + 1)
        sign = -1.0
    yv = x[ys]
    phase = np.exp(1j * k * (x[x_index] - yv)[:, None, None] * gap[None])
    integral = simpson(phase * QW[ys], x=yv, axis=0)
    resid = W[x_index] - np.eye(n) + sign * integral
    return float(np.max(np.abs(resid)))


# ---------------------------------------------------------------------------
# wedge completion and the fundamental tensor family
# ---------------------------------------------------------------------------

def wedge_complete(
    dual_rows_plus: np.ndarray,
    dual_rows_minus: np.ndarray,
    part: BlockPartition,
) -> np.ndarray:
    """Center column: signed wedge of the n-1 bounded dual rows.

    ``dual_rows_plus`` are the + rows of the left-normalized dual (shape
    (..., m+, n)), ``dual_rows_minus`` the - rows of the right-normalized
    dual (shape (..., m-, n)).  The result solves the full system
    v_x = (ik Sigma + Q) v with no growing phase (the phase drifts of the
    two factors cancel against the lift's trace term), and it reduces to
    the center unit vector when Q = 0.
    """
    rp = np.swapaxes(np.asarray(dual_rows_plus), -1, -2)  # (..., n, m+)
    rm = np.swapaxes(np.asarray(dual_rows_minus), -1, -2)  # (..., n, m-)
    if rp.shape[-1] != part.m_plus or rm.shape[-1] != part.m_minus:
        raise ConfigError("dual row counts do not match the partition")
    sign = -1.0 if part.m_plus % 2 else 1.0
    return sign * wedge_lift(np.concatenate([rp, rm], axis=-1))


def assemble_xi(
    outer_left: np.ndarray, center: np.ndarray, outer_right: np.ndarray
) -> np.ndarray:
    """Stack [outer_left | center | outer_right] into one (..., n, n) array.

    For the upper-family tensor the arguments are (M + columns,
    wedge-completed center, N - columns); for the lower family (N +
    columns, its center, M - columns).  All inputs must share leading
    axes; ``center`` may omit its trailing singleton.
    """
    if center.ndim == outer_left.ndim - 1:
        center = center[..., None]
    return np.concatenate([outer_left, center, outer_right], axis=-1)


# ---------------------------------------------------------------------------
# triangular representation kernels
# ---------------------------------------------------------------------------

def triangular_kernels(
    sol_M: FaddeevSolution | None,
    sol_N: FaddeevSolution | None,
    part: BlockPartition,
    mu: float = 1.0,
):
    """Lag-space kernels of the wavefunctions' triangular representations.

    M's sector columns admit one-sided Fourier representations

        M e_+ = e_+ + int_0^inf  K(x, x + g) e_+ e^{+ikg} dg,
        M e_- = e_- + int_0^inf  K(x, x + g) e_- e^{-ikg} dg,
        N e_+ = e_+ + int_0^inf  J(x, x - g) e_+ e^{-ikg} dg,
        N e_- = e_- + int_0^inf  J(x, x - g) e_- e^{+ikg} dg,

    so the kernels fall out of tail-aware inverse transforms of
    (W - I) over the k grid.  Requires store="all", real-k, full-column
    solutions.  Returns (gamma, kernels) where gamma is the nonnegative
    lag grid and kernels maps "K_plus"/"K_minus"/"J_plus"/"J_minus" to
    arrays of shape (nx, n_gamma, n, m_sector).
    """
    from .fourier import smoothed_lag_transform

    out = {}
    gamma_pos = None
    jobs = []
    if sol_M is not None:
        jobs += [("K_plus", sol_M, "p", -1), ("K_minus", sol_M, "m", +1)]
    if sol_N is not None:
        jobs += [("J_plus", sol_N, "p", +1), ("J_minus", sol_N, "m", -1)]
    for name, sol, sector, sign in jobs:
        if sol.dual or sol.sector is not None:
            raise ConfigError("triangular kernels need primal full solutions")
        sl = part.sector_slice(sector)
        k = np.real(sol.k)
        W = sol.values[..., sl].copy()  # (ns, nk, n, mc)
        idx = np.arange(part.n)[sl]
        for c, j in enumerate(idx):
            W[:, :, j, c] -= 1.0
        data = np.moveaxis(W, 1, -1)  # (ns, n, mc, nk)
        gamma, f, _ = smoothed_lag_transform(
            k, data, side="positive", exponent_sign=sign, mu=mu
        )
        keep = gamma >= 0.0
        gamma_pos = gamma[keep]
        out[name] = np.moveaxis(f[..., keep], -1, 1)
    return gamma_pos, out


# ---------------------------------------------------------------------------
# the four-family table
# ---------------------------------------------------------------------------

@dataclass
class FaddeevTable:
    """The four wavefunction families marched over one shared (x, k) grid.

    Every downstream stage (transition matrices, far-end limits, kernel
    extraction) consumes the same two primal and two dual marches; this
    bundles them.  Endpoint values are always stored, even when the
    caller restricts the kept x nodes, because the asymptotic limits
    live there.
    """

    Q: np.ndarray
    grid: Grid
    part: BlockPartition
    M: FaddeevSolution
    N: FaddeevSolution
    M_dual: FaddeevSolution
    N_dual: FaddeevSolution
    k_ref: float = 2.0

    @property
    def k(self) -> np.ndarray:
        return self.M.k

    def omega_plus(self, x_index: int) -> np.ndarray:
        """Wedge-completed center column that is bounded for Im k >= 0."""
        return wedge_complete(
            self.N_dual.at(x_index)[:, self.part.sl_plus, :],
            self.M_dual.at(x_index)[:, self.part.sl_minus, :],
            self.part,
        )

    def omega_minus(self, x_index: int) -> np.ndarray:
        """Wedge-completed center column bounded for Im k <= 0."""
        return wedge_complete(
            self.M_dual.at(x_index)[:, self.part.sl_plus, :],
            self.N_dual.at(x_index)[:, self.part.sl_minus, :],
            self.part,
        )

    def xi_plus(self, x_index: int) -> np.ndarray:
        """Upper tensor family [M e_+ e^{ikx} | omega_+ | N e_- e^{-ikx}]."""
        x = float(self.grid.x_nodes[x_index])
        up = np.exp(1j * self.k * x)[:, None, None]
        left = self.M.at(x_index)[:, :, self.part.sl_plus] * up
        right = self.N.at(x_index)[:, :, self.part.sl_minus] / up
        return assemble_xi(left, self.omega_plus(x_index), right)

    def xi_minus(self, x_index: int) -> np.ndarray:
        """Lower tensor family [N e_+ e^{ikx} | omega_- | M e_- e^{-ikx}]."""
        x = float(self.grid.x_nodes[x_index])
        up = np.exp(1j * self.k * x)[:, None, None]
        left = self.N.at(x_index)[:, :, self.part.sl_plus] * up
        right = self.M.at(x_index)[:, :, self.part.sl_minus] / up
        return assemble_xi(left, self.omega_minus(x_index), right)


def faddeev_table(
    Q: np.ndarray,
    grid: Grid,
    part: BlockPartition,
    *,
    store: str | np.ndarray = "endpoints",
    k_ref: float = 2.0,
    method: str = "auto",
) -> FaddeevTable:
    """March M, N, and both duals over the real k grid of ``grid``."""
    if not isinstance(store, str):
        store = np.union1d(np.asarray(store, dtype=int), [0, grid.nx - 1])
    sols = {}
    for dual in (False, True):
        for direction in (FROM_PLUS, FROM_MINUS):
            sols[(direction, dual)] = solve_faddeev(
                Q, grid, part, direction, dual,
                store=store, k_ref=k_ref, method=method,
            )
    return FaddeevTable(
        Q=np.asarray(Q, dtype=complex),
        grid=grid,
        part=part,
        M=sols[(FROM_PLUS, False)],
        N=sols[(FROM_MINUS, False)],
        M_dual=sols[(FROM_PLUS, True)],
        N_dual=sols[(FROM_MINUS, True)],
        k_ref=k_ref,
    )
