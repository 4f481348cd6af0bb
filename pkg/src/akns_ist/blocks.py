"""Block partition, grids, and entrywise phase algebra.

Everything in the package is organized around the three-block splitting
of C^n into the +, 0 and - sectors of Sigma = diag(I_{m+}, 0, -I_{m-}),
where the 0 sector always has dimension one.  This module owns:

- :class:`BlockPartition`: m+, m-, the diagonal of Sigma, the counting
  matrices N+ = 2I (+) / 1 (0) / 0 (-) and N- = 0 / 1 / 2I, and the
  selector matrices e+, e0, e- picking out the column sectors.
- :class:`Grid`: uniform x and k grids (odd point counts so 0 is a node).
- block views:  ``get_block(A, part, "p0")`` etc., where the sector labels
  are "p" (+), "0" (center), "m" (-).
- the phase conjugation e^{i t Sigma} A e^{-i t Sigma}, realized entrywise
  as A_{ab} * exp(i t (sigma_a - sigma_b)).  This is the only way k and x
  enter the Volterra/transition integrals, so it is centralized here.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError

BLOCK_LABELS = ("pp", "p0", "pm", "0p", "00", "0m", "mp", "m0", "mm")

# Off-diagonal blocks of a potential, in the documented CSV column order.
POTENTIAL_BLOCKS = ("p0", "pm", "0p", "0m", "mp", "m0")


@dataclass(frozen=True)
class BlockPartition:
    """The (m+, 1, m-) sector structure of C^n.

    Attributes
    ----------
    m_plus, m_minus : int
        Sizes of the + and - sectors; both must be >= 1.  The center
        sector always has size one, so n = m_plus + m_minus + 1.
    """

    m_plus: int
    m_minus: int

    def __post_init__(self):
        if self.m_plus < 1 or self.m_minus < 1:
            raise ConfigError("block sizes m_plus and m_minus must be >= 1")

    @property
    def n(self) -> int:
        return self.m_plus + self.m_minus + 1

    # ----- index bookkeeping -------------------------------------------------

    @property
    def i_zero(self) -> int:
        """0-based index of the center row/column."""
        return self.m_plus

    @property
    def sl_plus(self) -> slice:
        return slice(0, self.m_plus)

    @property
    def sl_zero(self) -> slice:
        return slice(self.m_plus, self.m_plus + 1)

    @property
    def sl_minus(self) -> slice:
        return slice(self.m_plus + 1, self.n)

    def sector_slice(self, label: str) -> slice:
        try:
            return {"p": self.sl_plus, "0": self.sl_zero, "m": self.sl_minus}[label]
        except KeyError:
            raise ConfigError(f"unknown sector label {label!r}") from None

    # ----- diagonal matrices -------------------------------------------------

    @property
    def sigma_diag(self) -> np.ndarray:
        """Diagonal of Sigma: (+1) x m_plus, 0, (-1) x m_minus."""
        d = np.zeros(self.n)
        d[self.sl_plus] = 1.0
        d[self.sl_minus] = -1.0
        return d

    @property
    def n_plus_diag(self) -> np.ndarray:
        """Diagonal of the counting matrix N+ = diag(2 I, 1, 0)."""
        d = np.zeros(self.n)
        d[self.sl_plus] = 2.0
        d[self.i_zero] = 1.0
        return d

    @property
    def n_minus_diag(self) -> np.ndarray:
        """Diagonal of the counting matrix N- = diag(0, 1, 2 I)."""
        d = np.zeros(self.n)
        d[self.sl_minus] = 2.0
        d[self.i_zero] = 1.0
        return d

    # ----- selectors ----------------------------------------------------------

    @property
    def e_plus(self) -> np.ndarray:
        """n x m_plus selector of the + columns."""
        return np.eye(self.n)[:, self.sl_plus]

    @property
    def e_zero(self) -> np.ndarray:
        """n x 1 selector of the center column."""
        return np.eye(self.n)[:, self.sl_zero]

    @property
    def e_minus(self) -> np.ndarray:
        """n x m_minus selector of the - columns."""
        return np.eye(self.n)[:, self.sl_minus]

    def sector_of(self, index: int) -> str:
        if index < self.m_plus:
            return "p"
        if index == self.m_plus:
            return "0"
        return "m"

    # ----- phase algebra -------------------------------------------------------

    @property
    def sigma_gap(self) -> np.ndarray:
        """n x n integer-valued matrix (sigma_a - sigma_b).

        Entry (a, b) is the exponent multiplier of the conjugation
        e^{i t Sigma} A e^{-i t Sigma}; values lie in {-2, -1, 0, 1, 2}.
        """
        s = self.sigma_diag
        return s[:, None] - s[None, :]


def phase_conjugate(A: np.ndarray, part: BlockPartition, t: np.ndarray | complex):
    """Return e^{i t Sigma} A e^{-i t Sigma} (entrywise phase multiply).

    ``t`` may be a scalar or any array broadcastable against A's leading
    axes; typically t = k * x with k possibly complex.  A has shape
    (..., n, n).
    """
    gap = part.sigma_gap
    t = np.asarray(t)
    expo = np.exp(1j * t[..., None, None] * gap) if t.ndim else np.exp(1j * t * gap)
    return A * expo


def get_block(A: np.ndarray, part: BlockPartition, label: str) -> np.ndarray:
    """View of the (row, col) sector block of A given by a two-letter label.

    Labels use "p", "0", "m" for the row and column sectors, e.g. "p0" is
    the (+, center) block.  Works on any array of shape (..., n, n).
    """
    if len(label) != 2:
        raise ConfigError(f"block label must have two characters, got {label!r}")
    r = part.sector_slice(label[0])
    c = part.sector_slice(label[1])
    return A[..., r, c]


def set_block(A: np.ndarray, part: BlockPartition, label: str, value) -> None:
    """Assign into the sector block of A named by ``label`` (in place)."""
    if len(label) != 2:
        raise ConfigError(f"block label must have two characters, got {label!r}")
    r = part.sector_slice(label[0])
    c = part.sector_slice(label[1])
    A[..., r, c] = value


def off_diagonal_mask(part: BlockPartition) -> np.ndarray:
    """Boolean n x n mask selecting the off-block-diagonal entries.

    True where the row and column sectors differ; the potential Q and the
    Marchenko kernels are supported exactly on this mask.
    """
    sectors = [part.sector_of(i) for i in range(part.n)]
    return np.array([[ra != ca for ca in sectors] for ra in sectors])


@dataclass(frozen=True)
class Grid:
    """Uniform x and k grids with odd point counts.

    The k grid is symmetric, k in [-k_max, k_max]; odd nx/nk guarantee
    that x = 0 and k = 0 are nodes, which several midpoint checks rely on.
    """

    x_min: float
    x_max: float
    nx: int
    k_max: float
    nk: int

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ConfigError("grid requires x_min < x_max")
        if self.k_max <= 0:
            raise ConfigError("grid requires k_max > 0")
        if self.nx < 3 or self.nx % 2 == 0:
            raise ConfigError("nx must be odd and >= 3")
        if self.nk < 3 or self.nk % 2 == 0:
            raise ConfigError("nk must be odd and >= 3")

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def k_nodes(self) -> np.ndarray:
        return np.linspace(-self.k_max, self.k_max, self.nk)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dk(self) -> float:
        return 2.0 * self.k_max / (self.nk - 1)


@dataclass
class ComplexBlockMatrix:
    """An n x n complex matrix tied to a partition, with sector accessors.

    Thin convenience wrapper used by a few call sites that pass single
    matrices around (scattering summaries, norming constants); bulk data
    stays in plain ndarrays with the module-level block helpers.
    """

    entries: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)
        n = self.partition.n
        if self.entries.shape[-2:] != (n, n):
            raise ConfigError(
                f"matrix shape {self.entries.shape} does not match partition order {n}"
            )

    def block(self, label: str) -> np.ndarray:
        return get_block(self.entries, self.partition, label)

    def with_block(self, label: str, value) -> "ComplexBlockMatrix":
        out = self.entries.copy()
        set_block(out, self.partition, label, value)
        return ComplexBlockMatrix(out, self.partition)


@lru_cache(maxsize=32)
def _cached_partition(m_plus: int, m_minus: int) -> BlockPartition:
    return BlockPartition(m_plus, m_minus)


def partition(m_plus: int, m_minus: int) -> BlockPartition:
    """Shared-instance constructor (partitions are tiny and immutable)."""
    return _cached_partition(m_plus, m_minus)
