"""Top-degree-minus-one exterior algebra in an alternating-sign basis.

Conventions
-----------
Lambda^{n-1}(C^n) is n-dimensional.  Two bases are in play:

- the "gap" basis  g_j = e_1 ^ ... ^ (e_j omitted) ^ ... ^ e_n,
- the signed basis  d_j = (-1)^{j-1} g_j   (1-based j).

All public functions speak the d-basis.  Its defining property is that
the induced action of a matrix A on Lambda^{n-1}, written in the d-basis,

    L(A) = det(A) * A^{-T}          (A invertible),

is a true multiplicative lift: L(I) = I and L(AB) = L(A) L(B) with no
stray signs, for every n.  For general A the entries are the cofactors,

    L(A)_{ij} = s_i s_j det(A with row i, column j deleted),
    s_j = (-1)^{j-1},   so   s_i s_j = (-1)^{i+j},

which is what :func:`matrix_lift` computes (no invertibility needed).
For odd n the signs s_j coincide with the reflection pattern
(-1)^{(j-1)(n-j)}; the alternating form is the extension that keeps the
lift identities exact when n is even as well.

The wedge of n-1 vectors v^1, ..., v^{n-1} has g-coordinate j equal to
det of the n x (n-1) matrix [v^1 ... v^{n-1}] with row j deleted, rows
kept in increasing order and no extra sign; the d-coordinate multiplies
by s_j.  These statements were checked symbolically for n = 2, 3 before
freezing the signs; the test suite pins them against a permutation-sum
oracle for n up to 5.

The derivative of the lift along a one-parameter group,

    dL(e^{tB})/dt |_{t=0} = (tr B) I - B^T,

is :func:`derived_lift`; it converts the first-order system solved by a
matrix-valued wavefunction into the first-order system solved by its
(n-1)-fold wedges.
"""

from __future__ import annotations

import numpy as np

from .blocks import BlockPartition
from .errors import ConfigError


def d_basis_signs(n: int) -> np.ndarray:
    """The alternating signs s_j = (-1)^{j-1} (1-based j)."""
    return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)


def wedge_lift(vectors: np.ndarray) -> np.ndarray:
    """d-basis coordinates of v^1 ^ ... ^ v^{n-1}.

    Parameters
    ----------
    vectors : ndarray, shape (..., n, n-1)
        The n-1 vectors as columns; leading axes are batch axes.

    Returns
    -------
    ndarray, shape (..., n)
        Coordinate j is s_j * det(vectors with row j deleted).
    """
    vectors = np.asarray(vectors)
    n = vectors.shape[-2]
    if vectors.shape[-1] != n - 1:
        raise ConfigError(
            f"wedge_lift needs n-1 column vectors in C^n, got shape {vectors.shape[-2:]}"
        )
    signs = d_basis_signs(n)
    coords = [
        signs[j] * np.linalg.det(np.delete(vectors, j, axis=-2)) for j in range(n)
    ]
    return np.stack(coords, axis=-1)


def matrix_lift(A: np.ndarray) -> np.ndarray:
    """Induced action of A on Lambda^{n-1} in the d-basis.

    Equals det(A) * A^{-T} when A is invertible, but is computed from
    minors so singular input is fine.  Batched over leading axes.
    """
    A = np.asarray(A)
    n = A.shape[-1]
    if A.shape[-2] != n:
        raise ConfigError(f"matrix_lift needs square input, got {A.shape[-2:]}")
    signs = d_basis_signs(n)
    out = np.empty(A.shape, dtype=np.result_type(A.dtype, float))
    for i in range(n):
        rows = np.delete(A, i, axis=-2)
        for j in range(n):
            minor = np.linalg.det(np.delete(rows, j, axis=-1))
            out[..., i, j] = signs[i] * signs[j] * minor
    return out


def derived_lift(B: np.ndarray) -> np.ndarray:
    """Generator of the lifted flow: d/dt L(e^{tB}) at t = 0.

    Returns (tr B) I - B^T, batched over leading axes.  If a matrix
    function W solves W' = B W, then L(W) solves L(W)' = derived_lift(B) L(W),
    and likewise the wedge of n-1 columns of W.
    """
    B = np.asarray(B)
    n = B.shape[-1]
    tr = np.trace(B, axis1=-2, axis2=-1)
    eye = np.eye(n, dtype=B.dtype)
    return tr[..., None, None] * eye - np.swapaxes(B, -1, -2)


def diagonal_lift(diag: np.ndarray) -> np.ndarray:
    """L of a diagonal matrix, returned as its diagonal.

    For D = diag(a_1..a_n): L(D) = diag(p / a_j) with p = prod a_i, i.e.
    entry j is the product of all the other a_i.  Computed without
    division so zero entries are handled.  Batched over leading axes.
    """
    diag = np.asarray(diag)
    n = diag.shape[-1]
    out = np.empty_like(diag)
    for j in range(n):
        out[..., j] = np.prod(np.delete(diag, j, axis=-1), axis=-1)
    return out


def second_column_minors(W: np.ndarray, side: str, part: BlockPartition) -> np.ndarray:
    """Mixed wedge of W's outer-sector rows with the opposite selectors.

    For side "plus" the n-1 wedged vectors are the first m+ rows of W
    (as column vectors W^T e_a, a = 1..m+) followed by the unit vectors
    of the - sector; for side "minus" they are the unit vectors of the
    + sector followed by the last m- rows of W.  The result carries the
    prefactor (-1)^{m+}, equal to (-1)^{m+ m-} whenever n is odd, that
    makes

        second_column_minors(I, side, part) = e_0   (center unit vector)

    hold on both sides for every partition.  This is the object that
    sits in the center column of the fundamental-tensor family and in
    the center of the boundary matrices.  Batched over leading axes of W.
    """
    W = np.asarray(W)
    n = part.n
    if W.shape[-2:] != (n, n):
        raise ConfigError(f"expected (..., {n}, {n}) input, got {W.shape}")
    rows_as_cols = np.swapaxes(W, -1, -2)
    eye = np.broadcast_to(np.eye(n, dtype=W.dtype), W.shape)
    if side == "plus":
        left = rows_as_cols[..., :, part.sl_plus]
        right = eye[..., :, part.sl_minus]
    elif side == "minus":
        left = eye[..., :, part.sl_plus]
        right = rows_as_cols[..., :, part.sl_minus]
    else:
        raise ConfigError(f"side must be 'plus' or 'minus', got {side!r}")
    sign = -1.0 if part.m_plus % 2 else 1.0
    return sign * wedge_lift(np.concatenate([left, right], axis=-1))
