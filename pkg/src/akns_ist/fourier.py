"""Fourier conventions and half-line-aware spectral/lag transforms.

Conventions
-----------
This module fixes, once, the transform pair used everywhere else:

    F(k) = integral e^{+i k y} f(y) dy                (lag -> spectral)
    f(y) = (1/2pi) integral e^{-i k y} F(k) dk        (spectral -> lag)

Grids are uniform and symmetric: k_j = -k_max + j dk with an odd point
count, so k = 0 is a node, and the conjugate lag grid is
gamma_m = m dgamma, dgamma = 2 pi / (N dk), reported fftshifted in
ascending order with gamma = 0 in the middle.

Discretization of the spectral -> lag direction:

    f(gamma_m) ~ (dk / 2pi) e^{+i k_max gamma_m} FFT(F)[m],

which is exactly invertible, so the half-line Cauchy projections built
from it satisfy P_+ + P_- = Id to machine precision.

Slow tails
----------
Spectral data with a 1/k tail (anything whose lag function jumps at
gamma = 0) cannot be transformed by windowed FFT alone: truncating
a/(ik) at |k| = k_max leaves O(a / (k_max gamma)) ringing, orders of
magnitude above the accuracy needed here.  The cure is analytic tail
subtraction.  With mu > 0 and the pole placed off the contour side the
support lives on, the template family is T_p(k) = (i (k +/- i mu))^{-p},
p = 1, 2, ...; each T_p ~ (ik)^{-p} at large |k| and has the exact lag

    side "positive" (pole at -i mu, lag supported on gamma >= 0):
        T_p <-> -(-gamma)^{p-1} / (p-1)!  e^{-mu gamma}
    side "negative" (pole at +i mu, lag supported on gamma <= 0):
        T_p <-> -(-1)^p gamma^{p-1} / (p-1)!  e^{+mu gamma}

:func:`fit_spectral_tail` least-squares fits the first few template
coefficients on the outer window of the k grid; the remainder decays
like k^{-(order+1)} and transforms cleanly; the fitted part is added
back in closed form, jump included.  The gamma = 0 sample always
carries the one-sided limit from inside the support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def _check_uniform_symmetric(k: np.ndarray) -> float:
    k = np.asarray(k)
    if k.ndim != 1 or k.size < 3 or k.size % 2 == 0:
        raise ConfigError("k grid must be 1-d with an odd number of points")
    dk = k[1] - k[0]
    if not np.allclose(np.diff(k), dk, rtol=0, atol=1e-10 * abs(dk)):
        raise ConfigError("k grid must be uniform")
    if abs(k[0] + k[-1]) > 1e-9 * abs(k[-1]):
        raise ConfigError("k grid must be symmetric about 0")
    return float(dk)


def lag_grid(k: np.ndarray, pad_factor: int = 1) -> np.ndarray:
    """Ascending lag grid conjugate to ``k`` (optionally zero-padded)."""
    dk = _check_uniform_symmetric(k)
    N = len(k) * pad_factor
    dgamma = 2.0 * np.pi / (N * dk)
    m = np.arange(N)
    m_signed = np.where(m <= N // 2, m, m - N)
    return np.sort(m_signed) * dgamma


def spectral_to_lag(
    k: np.ndarray,
    F: np.ndarray,
    exponent_sign: int = -1,
    pad_factor: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """FFT evaluation of (1/2pi) integral e^{i s k gamma} F(k) dk.

    Parameters
    ----------
    k : ndarray, shape (nk,)
        Uniform symmetric grid, odd length.
    F : ndarray, shape (..., nk)
        Spectral samples; leading axes are batch axes.
    exponent_sign : {-1, +1}
        The sign s in the exponent.
    pad_factor : int
        Zero-pad factor; enlarges the lag range and refines nothing
        (the underlying Riemann sum is unchanged, extra lag samples are
        trigonometric interpolants).

    Returns
    -------
    (gamma, f) : ascending lag grid of length pad_factor * nk and the
        lag samples, shape (..., len(gamma)).
    """
    dk = _check_uniform_symmetric(k)
    F = np.asarray(F)
    if F.shape[-1] != len(k):
        raise ConfigError("last axis of F must match the k grid")
    if exponent_sign == +1:
        F = F[..., ::-1]
    elif exponent_sign != -1:
        raise ConfigError("exponent_sign must be +1 or -1")
    N = len(k) * int(pad_factor)
    raw = np.fft.fft(F, n=N, axis=-1)
    m = np.arange(N)
    m_signed = np.where(m <= N // 2, m, m - N)
    dgamma = 2.0 * np.pi / (N * dk)
    gamma_fftorder = m_signed * dgamma
    phase = np.exp(1j * k[-1] * gamma_fftorder)
    f = (dk / (2.0 * np.pi)) * phase * raw
    order = np.argsort(m_signed)
    return gamma_fftorder[order], f[..., order]


def lag_to_spectral(
    gamma: np.ndarray,
    f: np.ndarray,
    k: np.ndarray,
    exponent_sign: int = +1,
) -> np.ndarray:
    """Trapezoid evaluation of integral e^{i s k gamma} f(gamma) dgamma.

    ``k`` may be any array, complex values included; the caller is
    responsible for pairing the half-plane of k with the decay of f.
    Returns shape f.shape[:-1] + k.shape.
    """
    gamma = np.asarray(gamma, dtype=float)
    f = np.asarray(f)
    k = np.asarray(k)
    if gamma.ndim != 1 or f.shape[-1] != gamma.size:
        raise ConfigError("f's last axis must match the gamma grid")
    w = np.empty_like(gamma)
    if gamma.size == 1:
        raise ConfigError("need at least two lag samples")
    w[1:-1] = 0.5 * (gamma[2:] - gamma[:-2])
    w[0] = 0.5 * (gamma[1] - gamma[0])
    w[-1] = 0.5 * (gamma[-1] - gamma[-2])
    kernel = np.exp(1j * exponent_sign * np.multiply.outer(gamma, k.ravel()))
    out = np.tensordot(f * w, kernel, axes=([-1], [0]))
    return out.reshape(f.shape[:-1] + k.shape)


def project_halfline(
    k: np.ndarray,
    F: np.ndarray,
    keep: str = "positive",
    exponent_sign: int = -1,
) -> np.ndarray:
    """Cauchy-type projection of F onto one lag half-line.

    Transforms to lag space (with the sign convention of
    :func:`spectral_to_lag`), keeps only the requested half-line (the
    gamma = 0 sample is shared half-and-half), and transforms back on
    the same k grid.  The two projections sum to the identity exactly.
    """
    dk = _check_uniform_symmetric(k)
    F = np.asarray(F)
    if keep not in ("positive", "negative"):
        raise ConfigError("keep must be 'positive' or 'negative'")
    G = F[..., ::-1] if exponent_sign == +1 else F
    N = len(k)
    raw = np.fft.fft(G, axis=-1)
    m = np.arange(N)
    m_signed = np.where(m <= N // 2, m, m - N)
    mask = np.where(
        m_signed == 0, 0.5, (m_signed > 0) if keep == "positive" else (m_signed < 0)
    ).astype(float)
    proj = np.fft.ifft(raw * mask, axis=-1)
    return proj[..., ::-1] if exponent_sign == +1 else proj


def taper_window(k: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Raised-cosine window: 1 inside, rolling to 0 over the outer fraction."""
    k = np.asarray(k, dtype=float)
    k_abs = np.abs(k)
    k_top = np.max(k_abs)
    k_knee = (1.0 - fraction) * k_top
    w = np.ones_like(k_abs)
    outer = k_abs > k_knee
    w[outer] = 0.5 * (1.0 + np.cos(np.pi * (k_abs[outer] - k_knee) / (k_top - k_knee)))
    return w


# ---------------------------------------------------------------------------
# analytic tail handling
# ---------------------------------------------------------------------------

@dataclass
class SpectralTail:
    """Fitted slow tail sum_p coeffs_p T_p of a spectral function.

    ``coeffs`` has the batch shape of the fitted data plus one trailing
    axis of length ``order``; ``side`` states which lag half-line the
    underlying function is supported on ("positive" or "negative") and
    thereby which half-plane the template poles avoid.
    """

    coeffs: np.ndarray
    mu: float
    side: str

    @property
    def order(self) -> int:
        return np.asarray(self.coeffs).shape[-1]

    @property
    def jump(self) -> np.ndarray:
        """Leading 1/(ik) coefficient = size of the lag jump at 0."""
        return np.asarray(self.coeffs)[..., 0]

    def spectral(self, k: np.ndarray) -> np.ndarray:
        """Template values sum_p coeffs_p T_p(k); k may be complex."""
        k = np.asarray(k)
        coeffs = np.asarray(self.coeffs)
        pole = 1j * self.mu if self.side == "positive" else -1j * self.mu
        base = 1.0 / (1j * (k + pole))
        out = np.zeros(coeffs.shape[:-1] + k.shape, dtype=complex)
        power = np.ones_like(base)
        for p in range(self.order):
            power = power * base
            out = out + coeffs[..., p, None] * power
        return out

    def lag(self, gamma: np.ndarray) -> np.ndarray:
        """Exact lag of the template, one-sided limit at gamma = 0.

        ``gamma`` may have any shape broadcastable against the batch
        shape of coeffs with one trailing axis appended.
        """
        gamma = np.asarray(gamma, dtype=float)
        coeffs = np.asarray(self.coeffs)
        if self.side == "positive":
            on = gamma >= 0.0
            decay = np.where(on, np.exp(-self.mu * np.clip(gamma, 0.0, None)), 0.0)
        else:
            on = gamma <= 0.0
            decay = np.where(on, np.exp(self.mu * np.clip(gamma, None, 0.0)), 0.0)
        out = np.zeros(np.broadcast_shapes(coeffs.shape[:-1] + (1,), gamma.shape), dtype=complex)
        fact = 1.0
        for p in range(1, self.order + 1):
            if p > 1:
                fact *= p - 1
            if self.side == "positive":
                shape_fn = -((-gamma) ** (p - 1)) / fact
            else:
                shape_fn = -((-1.0) ** p) * gamma ** (p - 1) / fact
            out = out + coeffs[..., p - 1, None] * (shape_fn * decay)
        return out


def fit_spectral_tail(
    k: np.ndarray,
    F: np.ndarray,
    side: str,
    mu: float = 1.0,
    fit_fraction: float = 0.15,
    order: int = 3,
) -> SpectralTail:
    """Least-squares fit of the first ``order`` tail templates.

    The fit uses the outer ``fit_fraction`` of the k grid on both ends,
    where the genuine (smooth, decaying) part of the spectrum is assumed
    negligible next to the algebraic tail.  Batched over leading axes.
    """
    _check_uniform_symmetric(k)
    if side not in ("positive", "negative"):
        raise ConfigError("side must be 'positive' or 'negative'")
    F = np.asarray(F, dtype=complex)
    k_top = np.max(np.abs(k))
    window = np.abs(k) >= (1.0 - fit_fraction) * k_top
    if np.count_nonzero(window) < 2 * order:
        raise ConfigError("tail fit window too small; increase fit_fraction")
    columns = []
    for p in range(order):
        unit = np.zeros(order)
        unit[p] = 1.0
        probe = SpectralTail(unit, mu, side)
        columns.append(probe.spectral(k[window]))
    design = np.stack(columns, axis=-1)  # (nw, order)
    gram = design.conj().T @ design
    rhs = np.tensordot(F[..., window], design.conj(), axes=([-1], [0]))
    coeff = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return SpectralTail(coeffs=coeff, mu=mu, side=side)


def smoothed_lag_transform(
    k: np.ndarray,
    F: np.ndarray,
    side: str,
    exponent_sign: int = -1,
    lag_shift: np.ndarray | float = 0.0,
    mu: float = 1.0,
    fit_fraction: float = 0.15,
    pad_factor: int = 2,
    taper_fraction: float = 0.1,
    tail: SpectralTail | None = None,
) -> tuple[np.ndarray, np.ndarray, SpectralTail]:
    """Tail-aware lag transform: f(gamma_m + lag_shift) for F on the k grid.

    Splits F into fitted algebraic tail plus remainder, transforms the
    remainder by (tapered, zero-padded) FFT, and adds the tail's lag in
    closed form at the exact shifted arguments.  ``lag_shift`` may be a
    scalar or broadcast against F's batch shape (one shift per batch
    entry); a nonzero shift is applied as a spectral phase, so there is
    no interpolation anywhere.

    A precomputed ``tail`` (from :func:`fit_spectral_tail` on the same
    data) can be passed to amortize the fit across many shifts.

    Returns (gamma, f, tail).
    """
    if exponent_sign == +1:
        # reduce to the -1 convention by reflecting the spectral axis
        F = np.asarray(F)[..., ::-1]
        if tail is not None:
            raise ConfigError("precomputed tails are only supported with sign -1")
        return smoothed_lag_transform(
            k, F, side, -1, lag_shift, mu, fit_fraction, pad_factor, taper_fraction
        )
    if tail is None:
        tail = fit_spectral_tail(k, F, side, mu=mu, fit_fraction=fit_fraction)
    F = np.asarray(F, dtype=complex)
    remainder = F - tail.spectral(k)
    if taper_fraction:
        remainder = remainder * taper_window(k, taper_fraction)
    shift = np.asarray(lag_shift, dtype=float)
    if shift.ndim:
        phase = np.exp(-1j * shift[..., None] * k)
        remainder = remainder * phase
    elif shift:
        remainder = remainder * np.exp(-1j * float(shift) * k)
    gamma, f_rem = spectral_to_lag(k, remainder, -1, pad_factor=pad_factor)
    arg = gamma + (shift[..., None] if shift.ndim else float(shift))
    f = f_rem + tail.lag(arg)
    return gamma, f, tail
