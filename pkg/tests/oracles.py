"""Independent reference implementations used to pin the package's numerics.

Everything here is written the slow, obvious way on purpose: permutation
sums instead of determinant routines, dense Runge-Kutta marching instead
of structure-exploiting propagators, closed forms where one exists.  The
tests compare the package against these, never the other way around.
"""

from __future__ import annotations

from itertools import combinations, permutations

import numpy as np


# ---------------------------------------------------------------------------
# exterior algebra
# ---------------------------------------------------------------------------

def perm_sign(perm) -> int:
    """Sign of a permutation given as a tuple of distinct integers."""
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def wedge_coordinates_by_permutation_sum(vectors: np.ndarray) -> np.ndarray:
    """Coordinates of v^1 ^ ... ^ v^{n-1} in the reflected d-basis.

    Expands the wedge over all permutations of each (n-1)-subset of row
    indices, with no determinant call anywhere.  vectors has shape
    (n, n-1) with the vectors as columns.
    """
    vectors = np.asarray(vectors)
    n, nv = vectors.shape
    assert nv == n - 1
    # coefficient of e_{i_1} ^ ... ^ e_{i_{n-1}} for each increasing subset
    gap_coeff = np.zeros(n, dtype=complex)
    for subset in combinations(range(n), n - 1):
        missing = (set(range(n)) - set(subset)).pop()
        total = 0.0 + 0.0j
        for perm in permutations(range(n - 1)):
            prod = perm_sign(perm)
            for slot, psrc in enumerate(perm):
                prod = prod * vectors[subset[slot], psrc]
            total += prod
        gap_coeff[missing] = total
    signs = np.array([(-1.0) ** j for j in range(n)])
    return signs * gap_coeff


def lift_matrix_by_permutation_sum(A: np.ndarray) -> np.ndarray:
    """d-basis matrix of the induced Lambda^{n-1} action, column by column.

    Column j is s_j times the wedge of A's columns with column j left out,
    using the permutation-sum wedge above.
    """
    A = np.asarray(A)
    n = A.shape[0]
    signs = np.array([(-1.0) ** j for j in range(n)])
    cols = []
    for j in range(n):
        reduced = np.delete(A, j, axis=1)
        cols.append(signs[j] * wedge_coordinates_by_permutation_sum(reduced))
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# reference ODE integrations (scipy's adaptive RK8, nothing shared with the
# package's split-step marcher)
# ---------------------------------------------------------------------------

def march_reference(
    Q_of_x,
    sigma_diag: np.ndarray,
    k: complex,
    x_eval: np.ndarray,
    normalize_at: float,
    dual: bool = False,
    columns: np.ndarray | None = None,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> np.ndarray:
    """Integrate W_x = ik [Sigma, W] +- (Q W | W Q) with W(normalize_at) = I.

    Primal: W_x = ik [Sigma, W] + Q(x) W; dual: W_x = ik [Sigma, W] - W Q(x).
    ``columns`` restricts the primal to those columns of the identity as
    initial data (for complex k); for duals it restricts rows.  Returns
    values at ``x_eval`` (ascending), shape (len(x_eval), n, nc) for a
    primal, (len(x_eval), nr, n) for a dual.
    """
    from scipy.integrate import solve_ivp

    sigma_diag = np.asarray(sigma_diag, dtype=float)
    n = len(sigma_diag)
    gap = sigma_diag[:, None] - sigma_diag[None, :]
    if columns is None:
        columns = np.arange(n)
    if dual:
        W0 = np.eye(n, dtype=complex)[columns, :]
    else:
        W0 = np.eye(n, dtype=complex)[:, columns]
    shape = W0.shape
    if dual:
        gap_r = gap[columns, :]

        def rhs(x, y):
            W = y.reshape(shape)
            return (1j * k * gap_r * W - W @ Q_of_x(x)).ravel()
    else:
        gap_c = gap[:, columns]

        def rhs(x, y):
            W = y.reshape(shape)
            return (1j * k * gap_c * W + Q_of_x(x) @ W).ravel()

    x_eval = np.asarray(x_eval, dtype=float)
    t_eval = x_eval if normalize_at <= x_eval[0] else x_eval[::-1]
    span = (normalize_at, t_eval[-1])
    sol = solve_ivp(
        rhs, span, W0.ravel(), t_eval=t_eval, method="DOP853", rtol=rtol, atol=atol
    )
    assert sol.success, sol.message
    out = sol.y.T.reshape(len(t_eval), *shape)
    if normalize_at > x_eval[0]:
        out = out[::-1]
    return out


# ---------------------------------------------------------------------------
# reference potentials with closed-form samplers
# ---------------------------------------------------------------------------

def bump_potential_callable(m_plus: int, m_minus: int, seed: int, amplitude: float = 0.25):
    """A smooth decaying test potential as a callable x -> (n, n) array.

    Sums of complex Gaussian bumps on every admissible sector (the six
    off-diagonal blocks), drawn once from a seeded generator so tests
    can evaluate the same function at arbitrary points.
    """
    rng = np.random.default_rng(seed)
    n = m_plus + 1 + m_minus
    sizes = [m_plus, 1, m_minus]
    starts = np.cumsum([0] + sizes)
    params = []
    for bi in range(3):
        for bj in range(3):
            if bi == bj:
                continue
            for i in range(sizes[bi]):
                for j in range(sizes[bj]):
                    row = starts[bi] + i
                    col = starts[bj] + j
                    nb = 3
                    amps = amplitude * (
                        rng.standard_normal(nb) + 1j * rng.standard_normal(nb)
                    ) / np.sqrt(nb)
                    centers = rng.uniform(-3.0, 3.0, nb)
                    widths = rng.uniform(0.8, 2.0, nb)
                    params.append((row, col, amps, centers, widths))

    def Q_of_x(x):
        x = np.asarray(x, dtype=float)
        Q = np.zeros(x.shape + (n, n), dtype=complex)
        for row, col, amps, centers, widths in params:
            val = np.zeros(x.shape, dtype=complex)
            for a, c, w in zip(amps, centers, widths):
                val += a * np.exp(-((x - c) ** 2) / w**2)
            Q[..., row, col] = val
        return Q

    return Q_of_x


def sech_potential_callable(amplitude: float = 0.3):
    """The reference reflectionless-style profile, m+ = m- = 1.

    Upper and lower short waves both equal amplitude * sech(x); the
    long-wave blocks vanish.
    """

    def Q_of_x(x):
        x = np.asarray(x, dtype=float)
        s = amplitude / np.cosh(x)
        Q = np.zeros(x.shape + (3, 3), dtype=complex)
        Q[..., 0, 1] = s
        Q[..., 1, 0] = s
        Q[..., 1, 2] = s
        Q[..., 2, 1] = s
        return Q

    return Q_of_x
