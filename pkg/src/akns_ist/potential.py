"""Wave fields, potential assembly, and the zero-curvature residual.

The spectral problem reads v_x = (ik Sigma + Q(x)) v with
Sigma = diag(I_{m+}, 0, -I_{m-}).  Q is supported on the off-diagonal
sector blocks (all six of them in general).  The coupled long-wave /
short-wave system lives in the square case m+ = m- = m, where the
blocks are populated from four physical fields:

    Q(+,0) = u      Q(+,-) = i a      Q(0,+) = w^dagger
    Q(0,-) = u^dagger      Q(-,+) = i b      Q(-,0) = w

with u, w the two short-wave envelopes (m-vectors) and a, b the two
long-wave fields (m x m matrices).  In code the four fields are named
``short_up`` (u), ``short_down`` (w), ``long_up`` (a), ``long_down`` (b),
"up"/"down" marking which outer sector the field feeds from the center.

The evolution is integrable: it is the compatibility condition of the
linear pair

    v_x = X v,          X = ik Sigma + Q,
    v_t = T v,          T = (ik)^2 A + ik B + C,

with A = (i/n) diag(I, 1-n, I), B the short-wave lift, and C quadratic
in the fields (see :func:`lax_matrices`).  :func:`zero_curvature_residual`
measures || X_t - T_x + [X, T] || on the grid interior given field time
derivatives, which is how the evolution equations are pinned to the
scattering flow in the tests.

The focusing reduction imposes Q^dagger = -sigma Q sigma with
sigma = diag(I, -1, I); in field terms short_down = short_up and
long_down = long_up^dagger.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockPartition, get_block, off_diagonal_mask, partition, set_block
from .errors import AdmissibilityError, ConfigError

# ---------------------------------------------------------------------------
# finite differences (uniform grid, 4th order, one-sided at the edges)
# ---------------------------------------------------------------------------

_D1_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D1_EDGE = [
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
]
_D2_INTERIOR = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_EDGE = [
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
]


def d_dx(f: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """4th-order first derivative along ``axis`` on a uniform grid."""
    return _apply_stencil(f, dx, axis, _D1_INTERIOR, _D1_EDGE, power=1)


def d2_dx2(f: np.ndarray, dx: float, axis: int = 0) -> np.ndarray:
    """4th-order second derivative along ``axis`` on a uniform grid."""
    return _apply_stencil(f, dx, axis, _D2_INTERIOR, _D2_EDGE, power=2)


def _apply_stencil(f, dx, axis, interior, edge, power):
    f = np.asarray(f)
    n = f.shape[axis]
    if n < 2 * len(interior):
        raise ConfigError("grid too short for the finite-difference stencils")
    f = np.moveaxis(f, axis, 0)
    out = np.zeros_like(f, dtype=np.result_type(f.dtype, float))
    half = len(interior) // 2
    for offset, c in enumerate(interior):
        if c == 0.0:
            continue
        sl = slice(offset, n - (len(interior) - 1 - offset))
        out[half : n - half] += c * f[sl]
    for row, coeffs in enumerate(edge):
        width = len(coeffs)
        out[row] = np.tensordot(coeffs, f[:width], axes=(0, 0))
        out[n - 1 - row] = ((-1.0) ** power) * np.tensordot(
            coeffs, f[n - width :][::-1], axes=(0, 0)
        )
    return np.moveaxis(out / dx**power, 0, axis)


# ---------------------------------------------------------------------------
# field container
# ---------------------------------------------------------------------------

@dataclass
class WaveFields:
    """Samples of the four coupled fields on an x grid (square case).

    Attributes
    ----------
    x : ndarray, shape (nx,)
    short_up, short_down : ndarray, shape (nx, m)
        Short-wave envelopes feeding the + and - sectors.
    long_up, long_down : ndarray, shape (nx, m, m)
        Long-wave fields occupying the (+,-) and (-,+) corners.
    """

    x: np.ndarray
    short_up: np.ndarray
    short_down: np.ndarray
    long_up: np.ndarray
    long_down: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        nx = self.x.size
        self.short_up = np.asarray(self.short_up, dtype=complex)
        self.short_down = np.asarray(self.short_down, dtype=complex)
        self.long_up = np.asarray(self.long_up, dtype=complex)
        self.long_down = np.asarray(self.long_down, dtype=complex)
        if self.short_up.ndim != 2 or self.short_up.shape[0] != nx:
            raise ConfigError("short_up must have shape (nx, m)")
        m = self.short_up.shape[1]
        if self.short_down.shape != (nx, m):
            raise ConfigError("short_down must have shape (nx, m)")
        if self.long_up.shape != (nx, m, m) or self.long_down.shape != (nx, m, m):
            raise ConfigError("long fields must have shape (nx, m, m)")

    @property
    def m(self) -> int:
        return self.short_up.shape[1]

    @property
    def part(self) -> BlockPartition:
        return partition(self.m, self.m)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def zeros_like(self) -> "WaveFields":
        return WaveFields(
            self.x,
            np.zeros_like(self.short_up),
            np.zeros_like(self.short_down),
            np.zeros_like(self.long_up),
            np.zeros_like(self.long_down),
        )

    def copy(self) -> "WaveFields":
        return WaveFields(
            self.x.copy(),
            self.short_up.copy(),
            self.short_down.copy(),
            self.long_up.copy(),
            self.long_down.copy(),
        )


def assemble_potential(fields: WaveFields) -> np.ndarray:
    """Build Q(x) of shape (nx, n, n) from the four coupled fields."""
    part = fields.part
    nx = fields.x.size
    Q = np.zeros((nx, part.n, part.n), dtype=complex)
    u = fields.short_up[:, :, None]
    w = fields.short_down[:, :, None]
    set_block(Q, part, "p0", u)
    set_block(Q, part, "pm", 1j * fields.long_up)
    set_block(Q, part, "0p", np.conj(np.swapaxes(w, -1, -2)))
    set_block(Q, part, "0m", np.conj(np.swapaxes(u, -1, -2)))
    set_block(Q, part, "mp", 1j * fields.long_down)
    set_block(Q, part, "m0", w)
    return Q


def fields_from_potential(
    Q: np.ndarray, x: np.ndarray, part: BlockPartition, closure_tol: float | None = 1e-6
) -> WaveFields:
    """Invert :func:`assemble_potential`.

    The center row blocks of Q duplicate the short-wave data; when
    ``closure_tol`` is not None their consistency is enforced to that
    absolute tolerance.
    """
    if part.m_plus != part.m_minus:
        raise ConfigError("coupled wave fields need m+ = m-")
    u = get_block(Q, part, "p0")[..., 0]
    w = get_block(Q, part, "m0")[..., 0]
    a = -1j * get_block(Q, part, "pm")
    b = -1j * get_block(Q, part, "mp")
    if closure_tol is not None:
        dup_w = np.conj(get_block(Q, part, "0p")[..., 0, :])
        dup_u = np.conj(get_block(Q, part, "0m")[..., 0, :])
        worst = max(np.max(np.abs(dup_w - w)), np.max(np.abs(dup_u - u)))
        if worst > closure_tol:
            raise ConfigError(
                f"center-row blocks inconsistent with the field closure by {worst:.3e}"
            )
    return WaveFields(x, u, w, a, b)


def potential_support_ok(Q: np.ndarray, part: BlockPartition, tol: float = 0.0) -> bool:
    """True when Q vanishes (to tol) on the block diagonal."""
    mask = off_diagonal_mask(part)
    return bool(np.max(np.abs(Q[..., ~mask])) <= tol)


# ---------------------------------------------------------------------------
# symmetry
# ---------------------------------------------------------------------------

def focusing_signature(part: BlockPartition) -> np.ndarray:
    """Diagonal of sigma = diag(I, -1, I) as a vector."""
    d = np.ones(part.n)
    d[part.i_zero] = -1.0
    return d


def focusing_defect(Q: np.ndarray, part: BlockPartition) -> float:
    """Max-norm of Q^dagger + sigma Q sigma (zero for focusing data)."""
    s = focusing_signature(part)
    Qd = np.conj(np.swapaxes(Q, -1, -2))
    return float(np.max(np.abs(Qd + s[:, None] * Q * s[None, :])))


def check_focusing(fields: WaveFields, tol: float = 1e-12) -> float:
    """Verify the focusing reduction on field level; returns the defect.

    Requires short_down = short_up and long_down = long_up^dagger, which
    is exactly Q^dagger = -sigma Q sigma for the assembled potential.
    """
    defect = max(
        float(np.max(np.abs(fields.short_down - fields.short_up))),
        float(
            np.max(
                np.abs(
                    fields.long_down - np.conj(np.swapaxes(fields.long_up, -1, -2))
                )
            )
        ),
    )
    if defect > tol:
        raise ConfigError(
            f"fields violate the focusing reduction by {defect:.3e} (tol {tol:.1e})"
        )
    q_defect = focusing_defect(assemble_potential(fields), fields.part)
    return max(defect, q_defect)


# ---------------------------------------------------------------------------
# linear pair and compatibility residual
# ---------------------------------------------------------------------------

def lax_matrices(fields: WaveFields, k: complex) -> tuple[np.ndarray, np.ndarray]:
    """The pair (X, T) at spectral parameter k, sampled on the x grid.

    X = ik Sigma + Q and T = (ik)^2 A + ik B + C with

        A = (i/n) diag(I_m, 1-n, I_m),
        B(+,0) = i u        B(0,+) = i w^dagger
        B(0,-) = -i u^dagger    B(-,0) = -i w
        C(+,+) = -i u w^dagger       C(+,0) = i u_x - a w
        C(+,-) = i u u^dagger        C(0,+) = -i w_x^dagger - u^dagger b
        C(0,0) = i (w^dagger u + u^dagger w)
        C(0,-) = -i u_x^dagger - w^dagger a
        C(-,+) = i w w^dagger        C(-,0) = i w_x - b u
        C(-,-) = -i w u^dagger

    (u = short_up, w = short_down, a = long_up, b = long_down).
    """
    part = fields.part
    n = part.n
    nx = fields.x.size
    dx = fields.dx
    u = fields.short_up[:, :, None]
    w = fields.short_down[:, :, None]
    a = fields.long_up
    b = fields.long_down
    u_x = d_dx(u, dx)
    w_x = d_dx(w, dx)
    dag = lambda z: np.conj(np.swapaxes(z, -1, -2))  # noqa: E731

    X = 1j * k * np.diag(part.sigma_diag)[None, :, :] + assemble_potential(fields)

    A = np.zeros((n, n), dtype=complex)
    A[np.arange(n), np.arange(n)] = 1j / n
    A[part.i_zero, part.i_zero] = 1j * (1 - n) / n

    B = np.zeros((nx, n, n), dtype=complex)
    set_block(B, part, "p0", 1j * u)
    set_block(B, part, "0p", 1j * dag(w))
    set_block(B, part, "0m", -1j * dag(u))
    set_block(B, part, "m0", -1j * w)

    C = np.zeros((nx, n, n), dtype=complex)
    set_block(C, part, "pp", -1j * (u @ dag(w)))
    set_block(C, part, "p0", 1j * u_x - a @ w)
    set_block(C, part, "pm", 1j * (u @ dag(u)))
    set_block(C, part, "0p", -1j * dag(w_x) - dag(u) @ b)
    set_block(C, part, "00", 1j * (dag(w) @ u + dag(u) @ w))
    set_block(C, part, "0m", -1j * dag(u_x) - dag(w) @ a)
    set_block(C, part, "mp", 1j * (w @ dag(w)))
    set_block(C, part, "m0", 1j * w_x - b @ u)
    set_block(C, part, "mm", -1j * (w @ dag(u)))

    T = (1j * k) ** 2 * A[None, :, :] + (1j * k) * B + C
    return X, T


def zero_curvature_residual(
    fields: WaveFields, fields_t: WaveFields, k_values
) -> float:
    """Max over k and grid interior of || X_t - T_x + [X, T] ||.

    ``fields_t`` carries the time derivatives of the four fields; the x
    derivative of T is taken numerically, so the result is meaningful a
    few stencil widths inside the domain (the outer 6 points per side
    are excluded).
    """
    dx = fields.dx
    worst = 0.0
    for k in np.atleast_1d(k_values):
        X, T = lax_matrices(fields, complex(k))
        X_t = assemble_potential(fields_t)
        T_x = d_dx(T, dx)
        R = X_t - T_x + X @ T - T @ X
        worst = max(worst, float(np.max(np.abs(R[6:-6]))))
    return worst


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def sech_fields(x: np.ndarray, amplitude: float = 0.3, m: int = 1) -> WaveFields:
    """Focusing reference data: short waves amplitude*sech(x), long waves 0."""
    x = np.asarray(x, dtype=float)
    env = amplitude / np.cosh(x)
    u = np.zeros((x.size, m), dtype=complex)
    u[:, 0] = env
    zero = np.zeros((x.size, m, m), dtype=complex)
    return WaveFields(x, u, u.copy(), zero, zero.copy())


def gaussian_fields(
    x: np.ndarray,
    amplitude: float = 0.1,
    width: float = 1.0,
    center: float = 0.0,
    m: int = 1,
) -> WaveFields:
    """Focusing Gaussian short-wave data, long waves 0."""
    x = np.asarray(x, dtype=float)
    env = amplitude * np.exp(-(((x - center) / width) ** 2))
    u = np.zeros((x.size, m), dtype=complex)
    u[:, 0] = env
    zero = np.zeros((x.size, m, m), dtype=complex)
    return WaveFields(x, u, u.copy(), zero, zero.copy())


def random_fields(
    x: np.ndarray, m: int, rng: np.random.Generator, amplitude: float = 0.2
) -> WaveFields:
    """Smooth random fields: gaussian bumps with random complex weights."""
    x = np.asarray(x, dtype=float)

    def bumps(shape):
        out = np.zeros((x.size,) + shape, dtype=complex)
        for _ in range(3):
            c = rng.uniform(-2.0, 2.0)
            wdt = rng.uniform(0.8, 1.8)
            coef = amplitude * (rng.normal(size=shape) + 1j * rng.normal(size=shape))
            out += np.exp(-(((x - c) / wdt) ** 2))[(...,) + (None,) * len(shape)] * coef
        return out

    return WaveFields(x, bumps((m,)), bumps((m,)), bumps((m, m)), bumps((m, m)))


def random_potential(
    x: np.ndarray,
    part: BlockPartition,
    rng: np.random.Generator,
    amplitude: float = 0.2,
) -> np.ndarray:
    """Smooth random Q with the correct block support, general m+/m-."""
    x = np.asarray(x, dtype=float)
    nx = x.size
    Q = np.zeros((nx, part.n, part.n), dtype=complex)
    mask = off_diagonal_mask(part)
    for i in range(part.n):
        for j in range(part.n):
            if not mask[i, j]:
                continue
            c = rng.uniform(-2.0, 2.0)
            wdt = rng.uniform(0.8, 1.8)
            coef = amplitude * (rng.normal() + 1j * rng.normal())
            Q[:, i, j] = coef * np.exp(-(((x - c) / wdt) ** 2))
    return Q


# ---------------------------------------------------------------------------
# decay guard and CSV round-trip
# ---------------------------------------------------------------------------

def admissibility_ratio(x: np.ndarray, Q: np.ndarray, edge_fraction: float = 0.05):
    """L1 mass of |Q| on the outer edges relative to the total.

    The scattering integrals assume the potential has decayed by the
    ends of the window; this ratio is the quantitative check.
    """
    x = np.asarray(x)
    amp = np.sum(np.abs(Q), axis=tuple(range(1, Q.ndim)))
    total = np.trapezoid(amp, x)
    if total == 0.0:
        return 0.0
    width = (x[-1] - x[0]) * edge_fraction
    left = x <= x[0] + width
    right = x >= x[-1] - width
    tail = np.trapezoid(amp[left], x[left]) + np.trapezoid(amp[right], x[right])
    return float(tail / total)


def check_admissibility(
    x: np.ndarray,
    Q: np.ndarray,
    threshold: float = 1e-6,
    force: bool = False,
    edge_fraction: float = 0.05,
) -> float:
    """Raise :class:`AdmissibilityError` when the edge mass is too large."""
    ratio = admissibility_ratio(x, Q, edge_fraction)
    if ratio > threshold and not force:
        raise AdmissibilityError(
            f"potential carries {ratio:.3e} of its L1 mass in the outer "
            f"{edge_fraction:.0%} of the window (threshold {threshold:.1e}); "
            "enlarge the domain or pass force to proceed anyway"
        )
    return ratio


def write_potential_csv(path, x: np.ndarray, Q: np.ndarray, part: BlockPartition):
    """Write x and the six potential blocks as labeled re/im columns."""
    from .blocks import POTENTIAL_BLOCKS

    cols = [np.asarray(x, dtype=float)]
    names = ["x"]
    for label in POTENTIAL_BLOCKS:
        blk = get_block(Q, part, label)
        rows, colqty = blk.shape[-2:]
        for i in range(rows):
            for j in range(colqty):
                names.append(f"re({label}:{i},{j})")
                names.append(f"im({label}:{i},{j})")
                cols.append(np.real(blk[:, i, j]))
                cols.append(np.imag(blk[:, i, j]))
    data = np.column_stack(cols)
    np.savetxt(path, data, delimiter=", ", header=", ".join(names), comments="")


def read_potential_csv(path) -> tuple[np.ndarray, np.ndarray, BlockPartition]:
    """Read back :func:`write_potential_csv` output, inferring the partition."""
    import re as _re

    with open(path) as fh:
        header = fh.readline().strip()
    names = [s.strip() for s in header.split(",")]
    # "re(p0:i,j)" columns got split at the comma inside the parentheses;
    # re-join label fragments
    merged = []
    buf = None
    for tok in names:
        if buf is not None:
            merged.append(buf + "," + tok)
            buf = None
        elif "(" in tok and ")" not in tok:
            buf = tok
        else:
            merged.append(tok)
    pattern = _re.compile(r"^(re|im)\((\w\w):(\d+),(\d+)\)$")
    m_plus = m_minus = 1
    for tok in merged[1:]:
        mt = pattern.match(tok)
        if not mt:
            raise ConfigError(f"unrecognized potential column {tok!r}")
        label, i = mt.group(2), int(mt.group(3))
        if label == "p0":
            m_plus = max(m_plus, i + 1)
        elif label == "m0":
            m_minus = max(m_minus, i + 1)
    part = partition(m_plus, m_minus)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = data[:, 0]
    Q = np.zeros((x.size, part.n, part.n), dtype=complex)
    col = 1
    from .blocks import POTENTIAL_BLOCKS

    for label in POTENTIAL_BLOCKS:
        blk = get_block(Q, part, label)
        rows, colqty = blk.shape[-2:]
        for i in range(rows):
            for j in range(colqty):
                blk[:, i, j] = data[:, col] + 1j * data[:, col + 1]
                col += 2
    return x, Q, part
