"""Scenario generation and noisy multi-snapshot simulation.

Sources are unit-power circular complex Gaussian symbols, independent per
snapshot; noise is complex white Gaussian with per-element variance
``10**(-snr_db/10)``.  Observations are pre-processed with the unitary
inverse DFT, so each column of ``Y`` keeps the norm of the raw array
output exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .array_model import UlaGeometry, steering_vector, unitary_idft

__all__ = [
    "Scenario",
    "SnapshotSet",
    "SnapshotFormatError",
    "draw_scenario",
    "generate_snapshots",
    "save_snapshots",
    "load_snapshots",
]


@dataclass(frozen=True)
class Scenario:
    """Ground truth: K distinct source directions (radians) and T snapshots."""

    K: int
    thetas: np.ndarray  # (K,) radians
    T: int

    def __post_init__(self):
        if self.K < 1 or len(self.thetas) != self.K:
            raise ValueError("K must be >= 1 and match the number of angles")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if len(set(float(t) for t in self.thetas)) != self.K:
            raise ValueError("source angles must be pairwise distinct")


@dataclass(frozen=True)
class SnapshotSet:
    """Post-IDFT observation matrix with the metadata that produced it."""

    Y: np.ndarray  # (M, T) complex
    snr_db: float
    noise_precision_true: float
    seed: int
    scenario: Scenario | None = field(default=None, compare=False)

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]


class SnapshotFormatError(ValueError):
    """Raised when a snapshot container file cannot be parsed."""


def draw_scenario(intervals, T: int, rng_seed: int) -> Scenario:
    """Draw one direction uniformly from each angle interval (degrees).

    Intervals must be pairwise disjoint and lie within [-90, 90] degrees;
    a degenerate interval (lo == hi) pins the angle exactly.
    """
    intervals = [(float(lo), float(hi)) for lo, hi in intervals]
    for lo, hi in intervals:
        if lo > hi:
            raise ValueError(f"interval ({lo}, {hi}) has lo > hi")
        if lo < -90.0 or hi > 90.0:
            raise ValueError(f"interval ({lo}, {hi}) must lie within [-90, 90]")
    ordered = sorted(intervals)
    for (_, hi_prev), (lo_next, _) in zip(ordered, ordered[1:]):
        if lo_next <= hi_prev:
            raise ValueError("angle intervals must be pairwise disjoint")
    rng = np.random.default_rng(rng_seed)
    thetas_deg = np.array([rng.uniform(lo, hi) for lo, hi in intervals])
    return Scenario(K=len(intervals), thetas=np.deg2rad(thetas_deg), T=int(T))


def generate_snapshots(
    scenario: Scenario, M: int, snr_db: float, rng_seed: int
) -> SnapshotSet:
    """Simulate T noisy snapshots and return their unitary inverse DFT.

    ``snr_db = inf`` yields noiseless snapshots.
    """
    UlaGeometry(M)
    rng = np.random.default_rng(rng_seed)
    K, T = scenario.K, scenario.T
    A = np.stack([steering_vector(float(t), M) for t in scenario.thetas], axis=1)
    S = (rng.standard_normal((K, T)) + 1j * rng.standard_normal((K, T))) / np.sqrt(2)
    sigma2 = 10.0 ** (-snr_db / 10.0)
    W = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((M, T)) + 1j * rng.standard_normal((M, T))
    )
    R = A @ S + W
    Y = unitary_idft(R.T).T  # column-wise transform
    Y.flags.writeable = False
    return SnapshotSet(
        Y=Y,
        snr_db=float(snr_db),
        noise_precision_true=float(10.0 ** (snr_db / 10.0)),
        seed=int(rng_seed),
        scenario=scenario,
    )


def save_snapshots(snapshots: SnapshotSet, path) -> None:
    """Write a snapshot set to the plain-text container format.

    Line 1: ``M,T,snr_db,noise_precision_true,seed,K``; line 2 the K true
    angles in radians (empty when unknown); then M rows of 2T interleaved
    re,im values.  All floats use round-trip-exact formatting.
    """
    Y = snapshots.Y
    M, T = Y.shape
    thetas = [] if snapshots.scenario is None else list(snapshots.scenario.thetas)
    with open(path, "w") as fh:
        fh.write(
            f"{M},{T},{snapshots.snr_db!r},{snapshots.noise_precision_true!r},"
            f"{snapshots.seed},{len(thetas)}\n"
        )
        fh.write(",".join(repr(float(t)) for t in thetas) + "\n")
        for r in range(M):
            parts = []
            for t in range(T):
                parts.append(repr(float(Y[r, t].real)))
                parts.append(repr(float(Y[r, t].imag)))
            fh.write(",".join(parts) + "\n")


def load_snapshots(path) -> SnapshotSet:
    """Read a snapshot set written by :func:`save_snapshots`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SnapshotFormatError(f"{path}: line 1: empty file")
    head = lines[0].split(",")
    if len(head) != 6:
        raise SnapshotFormatError(
            f"{path}: line 1: expected 6 header fields, got {len(head)}"
        )
    try:
        M, T = int(head[0]), int(head[1])
        snr_db = float(head[2])
        precision = float(head[3])
        seed = int(head[4])
        K = int(head[5])
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: line 1: {exc}") from None
    if len(lines) < 2 + M:
        raise SnapshotFormatError(
            f"{path}: expected {2 + M} lines for M={M}, found {len(lines)}"
        )
    scenario = None
    if K > 0:
        fields = [s for s in lines[1].split(",") if s != ""]
        if len(fields) != K:
            raise SnapshotFormatError(
                f"{path}: line 2: expected {K} angles, got {len(fields)}"
            )
        try:
            thetas = np.array([float(s) for s in fields])
        except ValueError as exc:
            raise SnapshotFormatError(f"{path}: line 2: {exc}") from None
        scenario = Scenario(K=K, thetas=thetas, T=T)
    Y = np.empty((M, T), dtype=complex)
    for r in range(M):
        lineno = 3 + r
        fields = lines[2 + r].split(",")
        if len(fields) != 2 * T:
            raise SnapshotFormatError(
                f"{path}: line {lineno}: expected {2 * T} values, got {len(fields)}"
            )
        try:
            vals = np.array([float(s) for s in fields])
        except ValueError as exc:
            raise SnapshotFormatError(f"{path}: line {lineno}: {exc}") from None
        Y[r] = vals[0::2] + 1j * vals[1::2]
    Y.flags.writeable = False
    return SnapshotSet(
        Y=Y,
        snr_db=snr_db,
        noise_precision_true=precision,
        seed=seed,
        scenario=scenario,
    )
