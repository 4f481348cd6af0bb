"""Discrete spectrum: eigenvalue search, residues, norming constants.

The bound states live at the zeros of det A_left_{++} det A_right_{--}
continued into the upper half plane (and of the mirrored pair below).
They are hunted by the argument principle: the winding of the
determinant around an adaptively refined rectangle boundary counts the
zeros inside, rectangles are bisected until each holds at most one,
and a secant iteration polishes the root.  Everything the search
evaluates goes through a value cache, and the underlying evaluator is
batched, so each refinement round costs one restricted march no matter
how many boundary points it adds.

The theory assumes simple, non-overlapping zeros off the real axis.
Violations are reported as NonSimpleZeroError: a rectangle that keeps
counting two or more zeros while shrinking below ``min_box``, or a
polished zero whose determinant derivative is below ``simple_tol``.

For each eigenvalue the residue of the transmission factor

    T(k) = diag(A_left(k)_{++}^{-1}, a_up(k), A_right(k)_{--}^{-1})

is taken by a centered circular contour average (two radii, their gap
reported), and the norming matrix is the least-squares solution of the
bound-state relation

    Xi_up(x, k_j) tau_j = +i Xi_up(x, k_j) C_tilde(k_j)^{-1} N_j,

sampled over the central half of the window, with the unknowns
restricted to the off-block-diagonal rows each column allows.  The
lower half plane mirrors this with the downward family and a -i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonSimpleZeroError, ToleranceError
from .faddeev import FROM_MINUS, FROM_PLUS, assemble_xi, solve_faddeev, wedge_complete
from .wiener_hopf import evaluate_factor

__all__ = [
    "DiscreteSpectrum",
    "EigenRecord",
    "contour_residue",
    "discrete_spectrum",
    "locate_zeros",
    "residues_and_norming",
]


class _CachedField:
    """Batched scalar field with an exact-point value cache."""

    def __init__(self, fn):
        self.fn = fn
        self.cache: dict[complex, complex] = {}
        self.calls = 0

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(pts, dtype=complex))
        flat = pts.ravel().tolist()
        missing = list(dict.fromkeys(p for p in flat if p not in self.cache))
        if missing:
            vals = np.asarray(self.fn(np.asarray(missing, dtype=complex)))
            self.calls += 1
            for p, v in zip(missing, vals.ravel().tolist()):
                self.cache[p] = complex(v)
        return np.array([self.cache[p] for p in flat]).reshape(pts.shape)


def _param_to_point(box, t):
    """Map perimeter parameter t in [0, 4] to the rectangle boundary."""
    re0, re1, im0, im1 = box
    t = np.asarray(t, dtype=float)
    z = np.empty(t.shape, dtype=complex)
    tm = np.where(t >= 4.0, t - 4.0, t)
    m = tm < 1.0
    z[m] = re0 + (re1 - re0) * tm[m] + 1j * im0
    m = (tm >= 1.0) & (tm < 2.0)
    z[m] = re1 + 1j * (im0 + (im1 - im0) * (tm[m] - 1.0))
    m = (tm >= 2.0) & (tm < 3.0)
    z[m] = re1 - (re1 - re0) * (tm[m] - 2.0) + 1j * im1
    m = tm >= 3.0
    z[m] = re0 + 1j * (im1 - (im1 - im0) * (tm[m] - 3.0))
    return z


def _boundary_winding(field, box, n_init, max_points=6000):
    """Zero count inside a rectangle by adaptive boundary sampling.

    Consecutive samples whose argument jumps by more than pi/2 get a
    midpoint inserted (batched) until the polygon is settled; failure
    to settle within ``max_points`` means a zero sits essentially on
    the contour and is reported for the caller to jitter the box.
    """
    ts = np.linspace(0.0, 4.0, 4 * n_init + 1)
    while True:
        f = field(_param_to_point(box, ts))
        if not np.all(np.isfinite(f)) or np.any(f == 0.0):
            raise ToleranceError("determinant vanishes on the search contour",
                                 stage="spectrum")
        steps = np.angle(f[1:] / f[:-1])
        bad = np.abs(steps) > 0.5 * np.pi
        if not np.any(bad):
            total = float(np.sum(steps)) / (2.0 * np.pi)
            w = int(np.round(total))
            if abs(total - w) > 0.25:
                raise ToleranceError(
                    f"argument failed to close (winding residual {total - w:+.3f})",
                    stage="spectrum",
                )
            return w
        if ts.size > max_points:
            raise ToleranceError(
                "contour never settles; a zero is too close to the boundary",
                stage="spectrum",
            )
        mids = 0.5 * (ts[:-1][bad] + ts[1:][bad])
        ts = np.sort(np.concatenate([ts, mids]))


def _inside(box, z, margin=0.0):
    re0, re1, im0, im1 = box
    return (re0 - margin <= z.real <= re1 + margin
            and im0 - margin <= z.imag <= im1 + margin)


def _expand(box, factor, domain):
    re0, re1, im0, im1 = box
    cr, ci = 0.5 * (re0 + re1), 0.5 * (im0 + im1)
    hr, hi = 0.5 * (re1 - re0) * factor, 0.5 * (im1 - im0) * factor
    d0, d1, d2, d3 = domain
    return (max(cr - hr, d0), min(cr + hr, d1),
            max(ci - hi, d2), min(ci + hi, d3))


def _polish(field, box, domain, tol=1e-12, itmax=80):
    """Secant iteration from the box center; None when it wanders off."""
    re0, re1, im0, im1 = box
    size = max(re1 - re0, im1 - im0)
    z0 = complex(0.5 * (re0 + re1), 0.5 * (im0 + im1))
    z1 = z0 + 0.05 * size * (1.0 + 1.0j) / np.sqrt(2.0)
    f0 = complex(field(z0)[0])
    f1 = complex(field(z1)[0])
    for _ in range(itmax):
        if f1 == f0:
            return None
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        if not (_inside(box, z2, margin=size) and _inside(domain, z2)):
            return None
        z0, f0 = z1, f1
        z1, f1 = z2, complex(field(z2)[0])
        if abs(z1 - z0) < tol * max(1.0, abs(z1)):
            return z1
    return None


def locate_zeros(
    det_fn,
    region,
    *,
    domain=None,
    n_init: int = 24,
    simple_tol: float = 1e-6,
    min_box: float = 1e-6,
) -> list[tuple[complex, complex]]:
    """All zeros of an analytic scalar field inside a rectangle.

    ``det_fn`` maps a complex array to values (batched); ``region`` is
    (re_min, re_max, im_min, im_max).  ``domain``, when given, bounds
    every evaluation point (jittered boxes and polish steps are clamped
    to it); use it to keep a half-plane evaluator on its half plane.
    Returns (zero, derivative) pairs; derivatives are centered finite
    differences, checked against ``simple_tol``.
    """
    field = det_fn if isinstance(det_fn, _CachedField) else _CachedField(det_fn)
    if domain is None:
        domain = (-np.inf, np.inf, -np.inf, np.inf)
    work = [tuple(float(v) for v in region)]
    roots: list[complex] = []
    while work:
        box = work.pop()
        w = None
        for attempt in range(4):
            try:
                w = _boundary_winding(field, box, n_init)
                break
            except ToleranceError:
                if attempt == 3:
                    raise
                box = _expand(box, 1.013 + 0.009 * attempt, domain)
        if w == 0:
            continue
        if w < 0:
            raise ConfigError(
                f"negative winding ({w}); the field is not analytic inside "
                f"the box {box}", stage="spectrum",
            )
        re0, re1, im0, im1 = box
        if max(re1 - re0, im1 - im0) < min_box:
            raise NonSimpleZeroError(
                f"{w} zeros crowd a box below size {min_box:.0e} near "
                f"{0.5 * (re0 + re1):+.6f}{0.5 * (im0 + im1):+.6f}j; "
                "overlapping zeros violate the simplicity assumption",
                stage="spectrum",
            )
        if w == 1:
            z = _polish(field, box, domain)
            if z is not None:
                roots.append(z)
                continue
        if re1 - re0 >= im1 - im0:
            mid = 0.5 * (re0 + re1)
            work += [(re0, mid, im0, im1), (mid, re1, im0, im1)]
        else:
            mid = 0.5 * (im0 + im1)
            work += [(re0, re1, im0, mid), (re0, re1, mid, im1)]

    kept: list[complex] = []
    for z in roots:
        if all(abs(z - other) > 1e-8 for other in kept):
            kept.append(z)
    out = []
    for z in kept:
        h = 1e-5 * max(1.0, abs(z))
        fp, fm = field(np.array([z + h, z - h]))
        dz = (fp - fm) / (2.0 * h)
        if abs(dz) < simple_tol:
            raise NonSimpleZeroError(
                f"determinant derivative {abs(dz):.2e} at zero {z:.6f} is "
                f"below {simple_tol:.0e}; the zero is not simple",
                stage="spectrum",
            )
        out.append((z, complex(dz)))
    return out


@dataclass
class DiscreteSpectrum:
    """Located eigenvalues and determinant derivatives, per half plane."""

    zeros_plus: np.ndarray
    deriv_plus: np.ndarray
    zeros_minus: np.ndarray
    deriv_minus: np.ndarray

    @property
    def empty(self) -> bool:
        return self.zeros_plus.size == 0 and self.zeros_minus.size == 0


def discrete_spectrum(
    trans,
    *,
    im_floor: float = 1e-3,
    cap: float | None = None,
    n_init: int = 24,
    simple_tol: float = 1e-6,
) -> DiscreteSpectrum:
    """Search both half planes of the continued determinants.

    The search covers |Re k| <= cap, im_floor <= |Im k| <= cap (cap
    defaults to half the grid's k_max), split at Re k = 0 into two
    starting boxes per half plane.  Zeros closer to the axis than
    ``im_floor`` fall outside the searched strip; they show up instead
    as flagged near-singularities on the real grid.
    """
    if cap is None:
        cap = 0.5 * trans.grid.k_max
    halves = {}
    for half, sign in (("upper", 1.0), ("lower", -1.0)):
        field = _CachedField(lambda kpts, h=half: trans.analytic_det(h, kpts))
        lo, hi = sign * cap, sign * im_floor
        im0, im1 = min(lo, hi), max(lo, hi)
        domain = (-np.inf, np.inf, 0.0, np.inf) if half == "upper" \
            else (-np.inf, np.inf, -np.inf, 0.0)
        found = []
        for box in ((-cap, 0.0, im0, im1), (0.0, cap, im0, im1)):
            found += locate_zeros(
                field, box, domain=domain,
                n_init=n_init, simple_tol=simple_tol,
            )
        halves[half] = found
    zp = sorted(halves["upper"], key=lambda t: t[0].real)
    zm = sorted(halves["lower"], key=lambda t: t[0].real)
    return DiscreteSpectrum(
        zeros_plus=np.array([z for z, _ in zp], dtype=complex),
        deriv_plus=np.array([d for _, d in zp], dtype=complex),
        zeros_minus=np.array([z for z, _ in zm], dtype=complex),
        deriv_minus=np.array([d for _, d in zm], dtype=complex),
    )


def contour_residue(fn, center: complex, radius: float, npoints: int = 24):
    """Residue of a (matrix-valued) batched function at a simple pole."""
    theta = 2.0 * np.pi * np.arange(npoints) / npoints
    ring = np.exp(1j * theta)
    vals = np.asarray(fn(center + radius * ring))
    phase = ring.reshape((npoints,) + (1,) * (vals.ndim - 1))
    return radius * np.mean(vals * phase, axis=0)


@dataclass
class EigenRecord:
    """One bound state: location, residue, norming matrix, diagnostics."""

    k: complex
    det_derivative: complex
    tau: np.ndarray
    norming: np.ndarray
    lsq_residual: float
    radius_gap: float


def _transmission_evaluator(trans, wh, wh_tilde, half: str):
    """T(k) in the upper half plane, T_tilde(k) in the lower, batched."""
    part = trans.part
    slp, slm, i0 = part.sl_plus, part.sl_minus, part.i_zero

    def T_fn(kpts):
        kpts = np.atleast_1d(np.asarray(kpts, dtype=complex))
        out = np.zeros((kpts.size, part.n, part.n), dtype=complex)
        if half == "upper":
            out[:, slp, slp] = np.linalg.inv(trans.analytic_block("l_pp", kpts))
            out[:, i0, i0] = evaluate_factor(wh, "plus", kpts)
            out[:, slm, slm] = np.linalg.inv(trans.analytic_block("r_mm", kpts))
        else:
            out[:, slp, slp] = np.linalg.inv(trans.analytic_block("r_pp", kpts))
            out[:, i0, i0] = evaluate_factor(wh_tilde, "minus", kpts)
            out[:, slm, slm] = np.linalg.inv(trans.analytic_block("l_mm", kpts))
        return out

    return T_fn


def _xi_samples(trans, zeros: np.ndarray, sample_idx: np.ndarray, half: str):
    """Bounded-family tensors at the eigenvalues, over the x samples.

    Returns an array (n_samples, n_zeros, n, n): the upward family for
    the upper half plane, the downward one below.
    """
    part, grid, Q = trans.part, trans.grid, trans.Q
    x_s = grid.x_nodes[sample_idx]

    def solve(direction, dual, sector):
        return solve_faddeev(
            Q, grid, part, direction, dual,
            k=zeros, sector=sector, store=sample_idx,
            k_ref=trans.k_ref, method="stepwise",
        )

    if half == "upper":
        left_sol = solve(FROM_PLUS, False, "plus")      # M + columns
        right_sol = solve(FROM_MINUS, False, "minus")   # N - columns
        rows_p = solve(FROM_MINUS, True, "plus")        # Nu + rows
        rows_m = solve(FROM_PLUS, True, "minus")        # Mu - rows
    else:
        left_sol = solve(FROM_MINUS, False, "plus")     # N + columns
        right_sol = solve(FROM_PLUS, False, "minus")    # M - columns
        rows_p = solve(FROM_PLUS, True, "plus")         # Mu + rows
        rows_m = solve(FROM_MINUS, True, "minus")       # Nu - rows
    center = wedge_complete(rows_p.values, rows_m.values, part)
    up = np.exp(1j * np.multiply.outer(x_s, zeros))[:, :, None, None]
    return assemble_xi(left_sol.values * up, center, right_sol.values / up)


def residues_and_norming(
    trans,
    wh,
    wh_tilde,
    spectrum: DiscreteSpectrum,
    *,
    n_samples: int = 16,
    resid_tol: float = 1e-5,
    npoints: int = 24,
) -> tuple[list[EigenRecord], list[EigenRecord]]:
    """Residues of the transmission factors and norming matrices.

    Residues come from circular contour averages at two radii (gap
    reported per record); norming matrices from the overdetermined
    bound-state relation over ``n_samples`` x nodes in the central half
    of the window, solved column by column with the block-diagonal rows
    excluded.  A relative residual above ``resid_tol`` means the
    scattering data is internally inconsistent and raises.
    """
    part, grid = trans.part, trans.grid
    nx = grid.nx
    sample_idx = np.unique(np.round(
        np.linspace(0.25 * (nx - 1), 0.75 * (nx - 1), n_samples)
    ).astype(int))

    results: dict[str, list[EigenRecord]] = {"upper": [], "lower": []}
    for half in ("upper", "lower"):
        if half == "upper":
            zeros, derivs = spectrum.zeros_plus, spectrum.deriv_plus
            eq_sign = 1j
        else:
            zeros, derivs = spectrum.zeros_minus, spectrum.deriv_minus
            eq_sign = -1j
        if zeros.size == 0:
            continue

        dist_axis = np.abs(zeros.imag)
        if zeros.size > 1:
            sep = np.abs(zeros[:, None] - zeros[None, :])
            np.fill_diagonal(sep, np.inf)
            dist_other = sep.min(axis=1)
        else:
            dist_other = np.full(zeros.size, np.inf)
        base = 0.5 * np.minimum(np.minimum(dist_axis, dist_other), 1.0)

        T_fn = _transmission_evaluator(trans, wh, wh_tilde, half)
        theta = 2.0 * np.pi * np.arange(npoints) / npoints
        ring = np.exp(1j * theta)
        pts = np.concatenate([
            z + r * f * ring
            for z, r in zip(zeros, base)
            for f in (0.8, 0.4)
        ])
        vals = T_fn(pts).reshape(zeros.size, 2, npoints, part.n, part.n)
        taus, gaps = [], []
        for j in range(zeros.size):
            pair = []
            for ridx, f in enumerate((0.8, 0.4)):
                r = base[j] * f
                pair.append(r * np.mean(
                    vals[j, ridx] * ring[:, None, None], axis=0
                ))
            taus.append(pair[0])
            gaps.append(float(np.max(np.abs(pair[0] - pair[1]))))
        taus = np.array(taus)

        xi = _xi_samples(trans, zeros, sample_idx, half)
        side = "plus" if half == "upper" else "minus"
        fact = wh_tilde if half == "upper" else wh
        center_inv = 1.0 / evaluate_factor(fact, side, zeros)
        design_all = xi.copy()
        design_all[..., part.i_zero] *= center_inv[None, :, None]
        rhs_all = np.einsum("sjab,jbc->sjac", xi, taus)

        sectors = [part.sector_of(i) for i in range(part.n)]
        ns = sample_idx.size
        for j, z in enumerate(zeros):
            N = np.zeros((part.n, part.n), dtype=complex)
            err2, scale2 = 0.0, 0.0
            for c in range(part.n):
                rows = [r for r in range(part.n) if sectors[r] != sectors[c]]
                A = (eq_sign * design_all[:, j][:, :, rows]).reshape(
                    ns * part.n, len(rows)
                )
                b = rhs_all[:, j, :, c].reshape(ns * part.n)
                sol, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
                N[rows, c] = sol
                err2 += float(np.sum(np.abs(A @ sol - b) ** 2))
                scale2 += float(np.sum(np.abs(b) ** 2))
            rel = np.sqrt(err2) / max(np.sqrt(scale2), 1e-30)
            if scale2 > 0 and rel > resid_tol:
                raise ToleranceError(
                    f"norming fit residual {rel:.2e} at k = {z:.6f} "
                    f"(limit {resid_tol:.0e})",
                    stage="spectrum",
                )
            results[half].append(EigenRecord(
                k=complex(z), det_derivative=complex(derivs[j]),
                tau=taus[j], norming=N,
                lsq_residual=rel, radius_gap=gaps[j],
            ))
    return results["upper"], results["lower"]
