"""Scalar winding numbers and Wiener-Hopf factorization.

The central entry of each scattering matrix is a scalar symbol on the
real k line of the form 1 + (decaying).  Its winding number around the
origin decides whether the inverse problem is solvable by the kernel
route at all, and when the winding vanishes the symbol splits
multiplicatively into boundary values of functions analytic above and
below the axis.  The split is a half-line Fourier restriction of the
logarithm, done here by FFT with a raised-cosine endpoint taper.

Convention: a function with lag support on gamma > 0, meaning
f(k) = interval_0^inf e^{ik gamma} c(gamma) dgamma, extends boundedly to
Im k > 0; "plus" always refers to that half-plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    SpectralSingularityError,
    ToleranceError,
    WindingError,
)
from .fourier import (
    project_halfline,
    spectral_to_lag,
    taper_window,
)

__all__ = [
    "ScalarFactorization",
    "blaschke",
    "blaschke_product",
    "cauchy_split",
    "evaluate_factor",
    "factorize_scalar",
    "wiener_inverse",
    "winding_number",
]


def winding_number(k: np.ndarray, f: np.ndarray, guard: float = 0.1) -> int:
    """Signed number of times f winds around 0 as k sweeps the grid.

    The curve is treated as closed through its endpoints, which is
    legitimate whenever f - 1 decays there.  Raises when a neighboring
    pair of samples jumps by more than 0.9 pi (under-resolved curve) or
    when the total increment is farther than ``guard`` from an integer
    multiple of 2 pi.
    """
    f = np.asarray(f, dtype=complex)
    if np.any(np.abs(f) == 0.0):
        raise SpectralSingularityError(
            "the symbol vanishes on the grid", stage="winding"
        )
    ang = np.unwrap(np.angle(f))
    jumps = np.abs(np.diff(ang))
    if jumps.size and np.max(jumps) > 0.9 * np.pi:
        raise ToleranceError(
            f"argument jumps by {np.max(jumps):.2f} rad between neighboring "
            "k nodes; the winding number is unreliable on this grid",
            stage="winding",
        )
    total = (ang[-1] - ang[0]) / (2.0 * np.pi)
    w = int(round(total))
    if abs(total - w) > guard:
        raise ToleranceError(
            f"winding increment {total:.3f} turns is not within {guard} of "
            "an integer; the symbol has not settled at the window ends",
            stage="winding",
        )
    return w


def blaschke(k: np.ndarray, w: int) -> np.ndarray:
    """Elementary winding carrier ((k - i)/(k + i))^w."""
    k = np.asarray(k, dtype=complex)
    return ((k - 1j) / (k + 1j)) ** int(w)


def blaschke_product(
    k: np.ndarray,
    zeros_plus: tuple = (),
    zeros_minus: tuple = (),
) -> np.ndarray:
    """Unimodular product with prescribed zeros, poles at their mirrors.

    Each upper zero z contributes (k - z)/(k - conj z), analytic above
    the axis and winding -1; each lower zero the mirrored factor with
    winding +1.  On the real line the modulus is 1, so dividing a
    symbol by this product changes only its phase.
    """
    k = np.asarray(k, dtype=complex)
    out = np.ones_like(k)
    for z in zeros_plus:
        z = complex(z)
        if z.imag <= 0.0:
            raise ConfigError(
                f"prescribed upper zero {z} is not above the axis",
                stage="wiener-hopf",
            )
        out = out * (k - z) / (k - np.conj(z))
    for z in zeros_minus:
        z = complex(z)
        if z.imag >= 0.0:
            raise ConfigError(
                f"prescribed lower zero {z} is not below the axis",
                stage="wiener-hopf",
            )
        out = out * (k - z) / (k - np.conj(z))
    return out


def cauchy_split(
    k: np.ndarray, f: np.ndarray, taper_fraction: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Split f into halves with one-sided lag support, f = f_plus + f_minus.

    The raised-cosine taper zeroes f at the window ends before the FFT
    mask so the periodic extension does not ring; the tapered-off
    remainder (living in the outer window, of the size of |f| there) is
    returned split evenly between the halves, keeping the sum exact.
    """
    f = np.asarray(f, dtype=complex)
    T = taper_window(k, taper_fraction)
    g = f * T
    fp = project_halfline(k, g, keep="positive", exponent_sign=-1)
    fm = project_halfline(k, g, keep="negative", exponent_sign=-1)
    rest = 0.5 * (f - g)
    return fp + rest, fm + rest


@dataclass
class ScalarFactorization:
    """Multiplicative split of a scalar symbol over the real k grid.

    ``symbol = carrier * A_plus * A_minus`` holds exactly on the grid,
    where the carrier is the product of any prescribed-zero Blaschke
    factors and the elementary factor for leftover winding.  A_plus
    extends to Im k > 0 and A_minus to Im k < 0, both tending to 1.
    Each factor is the product of a closed-form rational part
    exp(tail/(k +- i)) carrying the slowly settled 1/k tail and a
    remainder whose one-sided lag kernel is sampled by
    gamma_plus/K_plus (mirrored below the axis for A_minus); for symbols
    that decay fast the tails are negligible and the kernels describe
    the factors themselves.  ``log_remainder`` is the deflated log of
    the symbol with the rational tails stripped, the quantity both
    factors' logs are Cauchy projections of.

    Prescribed zeros stay attached to the side where their Blaschke
    factor is analytic: ``plus_values``/``minus_values`` give the axis
    values with that folding applied, and ``evaluate_factor`` applies
    it off the axis.  A_plus/A_minus themselves remain the smooth
    zero-free parts.
    """

    k: np.ndarray
    symbol: np.ndarray
    winding: int
    A_plus: np.ndarray
    A_minus: np.ndarray
    gamma_plus: np.ndarray
    K_plus: np.ndarray
    gamma_minus: np.ndarray
    K_minus: np.ndarray
    log_remainder: np.ndarray
    tail_plus: complex = 0.0
    tail_minus: complex = 0.0
    zeros_plus: tuple = ()
    zeros_minus: tuple = ()

    @property
    def plus_values(self) -> np.ndarray:
        """Axis values of the upper factor, prescribed zeros included."""
        return self.A_plus * blaschke_product(self.k, self.zeros_plus, ())

    @property
    def minus_values(self) -> np.ndarray:
        """Axis values of the lower factor, prescribed zeros included."""
        return self.A_minus * blaschke_product(self.k, (), self.zeros_minus)

    @property
    def residual(self) -> float:
        prod = (
            blaschke(self.k, self.winding)
            * self.plus_values
            * self.minus_values
        )
        return float(np.max(np.abs(prod - self.symbol)))


def factorize_scalar(
    k: np.ndarray,
    symbol: np.ndarray,
    *,
    taper_fraction: float = 0.1,
    end_tol: float = 1e-4,
    pad_factor: int = 2,
    zeros_plus: tuple = (),
    zeros_minus: tuple = (),
) -> ScalarFactorization:
    """Factor a scalar symbol whose logarithm settles over the k window.

    Known zeros of the upper/lower analytic parts can be prescribed;
    their Blaschke product is divided out first, which both removes the
    winding they carry and flattens the sharp phase they leave near the
    axis.  Any leftover winding is deflated by the elementary factor
    before logarithms are taken; consumers that need winding 0 must
    check the field.  Physical symbols approach 1 only like 1/k (their
    lag kernels jump at zero lag), which a finite window cannot split
    accurately by FFT alone; when the log still exceeds ``end_tol`` on
    the outer grid bands, its settled tail is matched there by
    p/(k+i) + q/(k-i) and moved into the factors in closed form (each
    basis term has purely one-sided lag support, so exact projections
    would assign it the same way; only windowing error is removed), and
    ``end_tol`` then applies to the log remainder on the bands: a
    remainder that big means the window truly is too small.  Symbols
    already settled below ``end_tol`` are split directly.
    Requirements: no zeros of the symbol on the grid.
    """
    k = np.asarray(k, dtype=float)
    s = np.asarray(symbol, dtype=complex)
    if s.shape != k.shape:
        raise ConfigError("symbol and k grids disagree", stage="wiener-hopf")
    smallest = float(np.min(np.abs(s)))
    if smallest < 1e-10:
        raise SpectralSingularityError(
            f"the symbol reaches |s| = {smallest:.2e} on the grid",
            stage="wiener-hopf",
        )
    zeros_plus = tuple(complex(z) for z in zeros_plus)
    zeros_minus = tuple(complex(z) for z in zeros_minus)
    s_defl = s / blaschke_product(k, zeros_plus, zeros_minus)
    w = winding_number(k, s_defl)
    g = s_defl * blaschke(k, -w) if w else s_defl
    lg = np.log(np.abs(g)) + 1j * np.unwrap(np.angle(g))
    # The deflated log is what gets split, so the settling treatment
    # belongs here: a Blaschke phase still carries O(1/k) at the ends.
    nb = max(3, int(round(0.02 * k.size)))
    band = np.zeros(k.size, dtype=bool)
    band[:nb] = True
    band[-nb:] = True
    p = q = 0.0 + 0.0j
    r = lg
    if float(np.max(np.abs(lg[band]))) > end_tol:
        # The constant column is a decoy: it keeps the rational columns
        # from soaking up a genuine offset from 1 (which has no
        # one-sided home), so an unsettled symbol still shows up in the
        # remainder below.
        cols = np.stack(
            [
                np.ones(int(np.count_nonzero(band)), dtype=complex),
                1.0 / (k[band] + 1j),
                1.0 / (k[band] - 1j),
            ],
            axis=1,
        )
        coef, *_ = np.linalg.lstsq(cols, lg[band], rcond=None)
        p, q = complex(coef[1]), complex(coef[2])
        r = lg - p / (k + 1j) - q / (k - 1j)
        edge = float(np.max(np.abs(r[band])))
        if edge > end_tol:
            raise ConfigError(
                f"symbol log is {edge:.2e} from settled at the window ends "
                f"(limit {end_tol:.0e}); enlarge the k window",
                stage="wiener-hopf",
            )
    lp, lm = cauchy_split(k, r, taper_fraction)
    A_plus = np.exp(lp + p / (k + 1j))
    A_minus = np.exp(lm + q / (k - 1j))
    # Lag kernels sample the remainder factors exp(lp), exp(lm) only:
    # those decay at the window ends, so the FFT sees no aliasing, while
    # the rational tails are evaluated in closed form when continuing.
    gamma, dens_p = spectral_to_lag(
        k, np.exp(lp) - 1.0, exponent_sign=-1, pad_factor=pad_factor
    )
    _, dens_m = spectral_to_lag(
        k, np.exp(lm) - 1.0, exponent_sign=-1, pad_factor=pad_factor
    )
    keep_p = gamma >= 0.0
    keep_m = gamma <= 0.0
    return ScalarFactorization(
        k=k,
        symbol=s,
        winding=w,
        A_plus=A_plus,
        A_minus=A_minus,
        gamma_plus=gamma[keep_p],
        K_plus=dens_p[keep_p],
        gamma_minus=gamma[keep_m],
        K_minus=dens_m[keep_m],
        log_remainder=r,
        tail_plus=p,
        tail_minus=q,
        zeros_plus=zeros_plus,
        zeros_minus=zeros_minus,
    )


def evaluate_factor(
    fact: ScalarFactorization, side: str, kpts: np.ndarray
) -> np.ndarray:
    """Continue one factor off the axis by its Cauchy representation.

    side="plus" evaluates A_plus for Im k > 0, side="minus" evaluates
    A_minus for Im k < 0 (the axis itself is excluded; there the stored
    grid arrays are the values).  The log of each factor is the Cauchy
    integral of ``log_remainder`` plus the closed-form rational tail;
    the trapezoid quadrature of that integral converges like
    exp(-2 pi Im k / dk), so points should sit at least a few grid
    spacings off the axis.
    """
    kpts = np.asarray(kpts, dtype=complex)
    k = fact.k
    r = fact.log_remainder

    def cauchy(z: np.ndarray) -> np.ndarray:
        kernel = r[None, :] / (k[None, :] - z.reshape(-1, 1))
        vals = np.trapezoid(kernel, k, axis=1) / (2j * np.pi)
        return vals.reshape(z.shape)

    if side == "plus":
        if np.any(kpts.imag <= 1e-12):
            raise ConfigError(
                "A_plus extends strictly above the axis only", stage="wiener-hopf"
            )
        vals = np.exp(cauchy(kpts) + fact.tail_plus / (kpts + 1j))
        return vals * blaschke_product(kpts, fact.zeros_plus, ())
    if side == "minus":
        if np.any(kpts.imag >= -1e-12):
            raise ConfigError(
                "A_minus extends strictly below the axis only", stage="wiener-hopf"
            )
        vals = np.exp(-cauchy(kpts) + fact.tail_minus / (kpts - 1j))
        return vals * blaschke_product(kpts, (), fact.zeros_minus)
    raise ConfigError(f"unknown side {side!r}", stage="wiener-hopf")


def wiener_inverse(k: np.ndarray, f: np.ndarray, min_abs: float = 1e-8) -> np.ndarray:
    """Reciprocal of a symbol, guarded by the invertibility conditions.

    The reciprocal of 1 + (integrable transform) stays in that class
    exactly when the symbol never vanishes and has zero winding; both
    conditions are checked before dividing.
    """
    f = np.asarray(f, dtype=complex)
    if float(np.min(np.abs(f))) < min_abs:
        raise SpectralSingularityError(
            "the symbol vanishes; it has no bounded inverse", stage="wiener-inverse"
        )
    w = winding_number(k, f)
    if w != 0:
        raise WindingError(
            f"winding number {w} != 0; the inverse leaves the algebra",
            stage="wiener-inverse",
        )
    return 1.0 / f
