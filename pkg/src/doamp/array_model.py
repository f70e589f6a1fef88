"""Array response model for a half-wavelength uniform linear array.

The array response to a far-field source is a complex exponential across
the elements.  Its spatial frequency splits into an integer DFT-bin index
``w`` plus a fractional offset ``alpha`` in [-0.5, 0.5), so the unitary
inverse DFT of a steering vector is a circularly shifted Dirichlet kernel
concentrated on a handful of bins around ``w``.  Keeping only the ``L``
dominant bins turns the estimation problem into a block-sparse linear
model ``y = V x`` whose 0/1 sensing structure is held here as a pair of
index maps instead of an explicit M x (M*L) matrix.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "UlaGeometry",
    "DoaComponents",
    "GridDecomposition",
    "TruncatedKernel",
    "steering_vector",
    "decompose_doa",
    "compose_doa",
    "unitary_idft",
    "unitary_dft",
    "kernel_value",
    "truncated_kernel",
    "build_grid",
    "apply_sensing",
    "dirichlet_kernel",
    "dirichlet_kernel_slope",
]


@dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array with half-wavelength spacing.

    ``element_count`` must be even so the bin grid {-M/2, ..., M/2-1}
    is symmetric.
    """

    element_count: int

    def __post_init__(self):
        m = self.element_count
        if not isinstance(m, (int, np.integer)) or m < 2:
            raise ValueError(f"element_count must be an integer >= 2, got {m!r}")
        if m % 2 != 0:
            raise ValueError(f"element_count must be even, got {m}")


@dataclass(frozen=True)
class DoaComponents:
    """Integer bin index plus fractional offset of a direction.

    ``w + alpha = 0.5 * M * sin(theta)`` with ``alpha`` in [-0.5, 0.5) and
    ``w`` folded into {-M/2, ..., M/2-1}.  Directions within half a bin of
    +90 degrees fold onto the -M/2 edge and are ambiguous by construction.
    """

    w: int
    alpha: float

    def __post_init__(self):
        if not -0.5 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [-0.5, 0.5), got {self.alpha}")


@dataclass(frozen=True)
class TruncatedKernel:
    """The L retained Dirichlet-kernel samples for one fractional offset."""

    values: np.ndarray  # (L,) complex, ordered by ascending offset
    alpha: float


@dataclass(frozen=True)
class GridDecomposition:
    """Sparse sensing structure linking bin grid, offset slots and rows.

    ``rows[m, l]`` is the (0-based) observation row receiving the ``l``-th
    kernel slot of grid point ``m``; ``grid_index[r, l]`` is its inverse in
    the first argument.  For each fixed slot both maps are permutations of
    {0, ..., M-1}, which encodes a 0/1 sensing matrix with a single 1 per
    column and exactly L ones per row.
    """

    M: int
    L: int
    offsets: np.ndarray  # (L,) int, symmetric window {-(L-1)/2, ..., (L-1)/2}
    w_values: np.ndarray  # (M,) int, grid index -> integer bin {-M/2, ..., M/2-1}
    rows: np.ndarray  # (M, L) int
    grid_index: np.ndarray  # (M, L) int

    def row_of(self, m: int, l: int) -> int:
        return int(self.rows[m, l])

    def grid_of(self, r: int, l: int) -> int:
        return int(self.grid_index[r, l])


def steering_vector(theta: float, M: int) -> np.ndarray:
    """Array response to a unit source at angle ``theta`` (radians).

    Element ``i`` equals ``exp(-j * pi * i * sin(theta))``; the norm is
    sqrt(M).
    """
    if M < 2:
        raise ValueError(f"M must be >= 2, got {M}")
    if not -np.pi / 2 <= theta <= np.pi / 2:
        raise ValueError(f"theta must lie in [-pi/2, pi/2], got {theta}")
    i = np.arange(M)
    return np.exp(-1j * np.pi * i * np.sin(theta))


def decompose_doa(theta: float, M: int) -> DoaComponents:
    """Split a direction into integer bin and fractional offset.

    ``w = round(0.5 * M * sin(theta))`` (half-way cases round up so that
    ``alpha`` stays in [-0.5, 0.5)), then ``w = +M/2`` is folded to
    ``-M/2`` so the grid has exactly M points.
    """
    UlaGeometry(M)
    if not -np.pi / 2 <= theta <= np.pi / 2:
        raise ValueError(f"theta must lie in [-pi/2, pi/2], got {theta}")
    x = 0.5 * M * np.sin(theta)
    w = int(np.floor(x + 0.5))
    alpha = float(x - w)
    w = int((w + M // 2) % M) - M // 2
    return DoaComponents(w=w, alpha=alpha)


def compose_doa(c: DoaComponents, M: int) -> float:
    """Recover the direction (radians) from its (w, alpha) components."""
    arg = 2.0 * (c.w + c.alpha) / M
    if abs(arg) > 1.0:
        raise ValueError(
            f"2*(w + alpha)/M = {arg:.6f} is outside [-1, 1]; "
            "the components do not describe a physical direction"
        )
    return float(np.arcsin(arg))


def unitary_idft(v: np.ndarray) -> np.ndarray:
    """Unitary (norm-preserving) inverse DFT of a vector."""
    return np.fft.ifft(np.asarray(v), norm="ortho")


def unitary_dft(v: np.ndarray) -> np.ndarray:
    """Unitary forward DFT, the inverse of :func:`unitary_idft`."""
    return np.fft.fft(np.asarray(v), norm="ortho")


def kernel_value(delta: int, alpha: float, M: int) -> complex:
    """One sample of the unit-exponential inverse-DFT kernel.

    Returns ``(1/sqrt(M)) * sum_m exp(j*2*pi*m*(delta - alpha)/M)`` by
    direct summation, which needs no special-casing at integer arguments.
    """
    if not -0.5 <= alpha <= 0.5:
        raise ValueError(f"alpha must lie in [-0.5, 0.5], got {alpha}")
    if abs(delta) >= M:
        raise ValueError(f"|delta| must be < M, got delta={delta}, M={M}")
    m = np.arange(M)
    return complex(np.exp(2j * np.pi * m * (delta - alpha) / M).sum() / np.sqrt(M))


def truncated_kernel(alpha: float, grid: GridDecomposition) -> TruncatedKernel:
    """Kernel samples at the grid's L symmetric offsets for one ``alpha``."""
    values = np.array([kernel_value(int(d), alpha, grid.M) for d in grid.offsets])
    return TruncatedKernel(values=values, alpha=float(alpha))


def build_grid(M: int, L: int) -> GridDecomposition:
    """Construct the index maps of the sparse sensing structure.

    The (0-based) row for grid point ``m`` at slot ``l`` is
    ``(w_m + offset_l) mod M``; the symmetric offset window requires L odd.
    """
    UlaGeometry(M)
    if L % 2 != 1 or L < 1:
        raise ValueError(f"L must be a positive odd integer, got {L}")
    if L >= M:
        raise ValueError(f"L must be smaller than M, got L={L}, M={M}")
    offsets = np.arange(-(L - 1) // 2, (L - 1) // 2 + 1)
    w_values = np.arange(M) - M // 2
    rows = (w_values[:, None] + offsets[None, :]) % M
    grid_index = (np.arange(M)[:, None] - offsets[None, :] + M // 2) % M
    for a in (offsets, w_values, rows, grid_index):
        a.flags.writeable = False
    return GridDecomposition(
        M=M, L=L, offsets=offsets, w_values=w_values, rows=rows, grid_index=grid_index
    )


def apply_sensing(grid: GridDecomposition, x: np.ndarray) -> np.ndarray:
    """Multiply by the sensing structure without materializing it.

    ``x`` is the length M*L block vector, slot-major within each grid
    point; output row ``r`` sums the L entries routed to it.
    """
    x = np.asarray(x)
    if x.shape != (grid.M * grid.L,):
        raise ValueError(f"x must have length M*L = {grid.M * grid.L}, got {x.shape}")
    blocks = x.reshape(grid.M, grid.L)
    return blocks[grid.grid_index, np.arange(grid.L)[None, :]].sum(axis=1)


# Closed-form kernel evaluation.  The direct summation above is O(M) per
# sample; the estimator needs fresh kernel values and slopes at every grid
# point each iteration, so these vectorized forms evaluate in O(1) per
# sample.  Valid for |u| < M.

_SERIES_SWITCH = 5e-3  # |u| below which the slope uses the series branch


def _dirichlet_ratio(u: np.ndarray, M: int) -> np.ndarray:
    # sin(pi*u)/sin(pi*u/M) with the removable singularity at u = 0 filled.
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-9
    den = np.sin(np.pi * np.where(small, 1.0, u) / M)
    num = np.sin(np.pi * np.where(small, 1.0, u))
    return np.where(small, float(M), num / den)


def dirichlet_kernel(u, M: int):
    """Vectorized kernel sample ``(1/sqrt(M)) * sum_m exp(j*2*pi*m*u/M)``."""
    u = np.asarray(u, dtype=float)
    phase = np.exp(1j * np.pi * u * (M - 1) / M)
    return phase * _dirichlet_ratio(u, M) / np.sqrt(M)


def dirichlet_kernel_slope(u, M: int):
    """Vectorized derivative of :func:`dirichlet_kernel` with respect to u.

    Internally the derivative of the kernel's magnitude-like factor is the
    difference of two nearly equal sines; a short odd series replaces it
    below ``|u| < 5e-3`` where the direct form loses precision.
    """
    u = np.asarray(u, dtype=float)
    a = np.pi * u
    b = a / M

    small = np.abs(u) < _SERIES_SWITCH
    tiny = np.abs(u) < 1e-9
    u_safe = np.where(tiny, 1.0, u)
    b_safe = np.pi * u_safe / M

    direct = np.cos(a) * np.sin(b) - np.sin(a) * np.cos(b) / M
    series = (
        -(np.pi**3) * u**3 / (3 * M) * (1.0 - 1.0 / M**2)
        + (np.pi**5) * u**5 / (30 * M) * (1.0 - 1.0 / M**4)
    )
    numerator = np.where(small, series, direct)
    correction = np.pi * numerator / np.sin(b_safe) ** 2
    # Leading linear behavior where both numerator and sin^2 underflow.
    correction = np.where(
        tiny, -(np.pi**2) * u * (M * M - 1.0) / (3.0 * M), correction
    )

    phase = np.exp(1j * a * (M - 1) / M)
    ratio = _dirichlet_ratio(u, M)
    return phase * (1j * np.pi * (M - 1) / M * ratio + correction) / np.sqrt(M)
