"""Reference methods: two-stage DFT estimation, grid ML, and the CRB.

All operate on the raw (pre-transform) M x T snapshot matrix.  The CRB is
the deterministic (conditional) bound evaluated with known unit source
powers; the variant matters when comparing against published curves.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .array_model import decompose_doa, steering_vector
from .inference import DoaEstimate

__all__ = ["RefineConfig", "dft_two_stage", "ml_grid", "crb"]


@dataclass(frozen=True)
class RefineConfig:
    """Local-search resolution of the DFT method's second stage.

    ``P`` sub-grid points per coarse bin, searched over ``half_width``
    bins on each side of a stage-1 peak.
    """

    P: int = 20
    half_width: int = 3

    def __post_init__(self):
        if self.P < 2:
            raise ValueError(f"P must be >= 2, got {self.P}")
        if self.half_width < 1:
            raise ValueError(f"half_width must be >= 1, got {self.half_width}")


def _fold_bin(b: int, M: int) -> int:
    return int((b + M // 2) % M) - M // 2


def _spectrum_peaks(power: np.ndarray, K: int, radius: int) -> list[int]:
    # Greedy selection with circular suppression; zero-power bins never
    # qualify, so all-zero data reports a shortfall.
    M = len(power)
    order = np.argsort(-power, kind="stable")
    chosen: list[int] = []
    for b in order:
        if power[b] <= 0.0:
            continue
        if chosen:
            dist = np.abs(np.asarray(chosen) - b)
            if np.min(np.minimum(dist, M - dist)) <= radius:
                continue
        chosen.append(int(b))
        if len(chosen) == K:
            break
    return chosen


def dft_two_stage(Y_raw: np.ndarray, K: int, refine: RefineConfig | None = None):
    """Two-stage DFT method: coarse bin peaks, then local matched filter.

    Stage 1 picks the K largest peaks of the snapshot-averaged spectrum
    of the unitary inverse DFT, suppressing neighbors within
    ``half_width`` bins of an accepted peak.  Stage 2 maximizes the
    snapshot-averaged matched-filter power over a sub-grid of ``P``
    points per bin spanning the peak's local region.  Returns fewer than
    K estimates when no further separable peaks exist.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    refine = refine or RefineConfig()
    Y_raw = np.asarray(Y_raw, dtype=complex)
    M, T = Y_raw.shape
    spectrum = np.fft.ifft(Y_raw, axis=0, norm="ortho")
    power = (np.abs(spectrum) ** 2).mean(axis=1)
    peaks = _spectrum_peaks(power, K, refine.half_width)

    estimates = []
    hw, P = refine.half_width, refine.P
    for b in peaks:
        w0 = _fold_bin(b, M)
        w_cand = w0 + np.arange(-hw * P, hw * P + 1) / P
        w_cand = w_cand[np.abs(2.0 * w_cand / M) <= 1.0]
        thetas = np.arcsin(2.0 * w_cand / M)
        A = np.exp(
            -1j * np.pi * np.arange(M)[:, None] * np.sin(thetas)[None, :]
        )
        score = (np.abs(A.conj().T @ Y_raw) ** 2).mean(axis=1) / M
        best = int(np.argmax(score))
        theta_hat = float(thetas[best])
        c = decompose_doa(theta_hat, M)
        estimates.append(
            DoaEstimate(
                theta_hat=theta_hat,
                w=c.w,
                alpha_hat=c.alpha,
                power=float(score[best]) / M,
                iterations=0,
                converged=True,
            )
        )
    return estimates


def _projection_scores(A_grid, R_hat, A_fixed=None):
    # Trace of the sample-covariance projection gained by adding each
    # candidate column to the fixed set.
    if A_fixed is None or A_fixed.shape[1] == 0:
        B = A_grid
    else:
        Q, _ = np.linalg.qr(A_fixed)
        B = A_grid - Q @ (Q.conj().T @ A_grid)
    norms = (np.abs(B) ** 2).sum(axis=0)
    good = norms > 1e-9
    scores = np.full(A_grid.shape[1], -np.inf)
    RB = R_hat @ B[:, good]
    scores[good] = (B[:, good].conj() * RB).sum(axis=0).real / norms[good]
    return scores


def ml_grid(Y_raw: np.ndarray, K: int, grid_step_deg: float):
    """Deterministic-ML angle search over a uniform degree grid.

    Maximizes the trace of the sample-covariance projection onto the
    candidate steering subspace: exhaustively for K = 1, by alternating
    coordinate maximization from the DFT initialization for K in {2, 3}.
    """
    if K > 3:
        raise ValueError("ml_grid supports at most K = 3 sources")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if grid_step_deg <= 0:
        raise ValueError(f"grid_step_deg must be positive, got {grid_step_deg}")
    Y_raw = np.asarray(Y_raw, dtype=complex)
    M, T = Y_raw.shape
    R_hat = (Y_raw @ Y_raw.conj().T) / T

    grid_deg = np.arange(-90.0, 90.0 + grid_step_deg / 2, grid_step_deg)
    grid_deg = np.clip(grid_deg, -90.0, 90.0)
    thetas_grid = np.deg2rad(grid_deg)
    A_grid = np.exp(
        -1j * np.pi * np.arange(M)[:, None] * np.sin(thetas_grid)[None, :]
    )

    def make_estimates(theta_list, sweeps):
        out = []
        for theta in theta_list:
            c = decompose_doa(float(theta), M)
            a = steering_vector(float(theta), M)
            mf = float((np.abs(a.conj() @ Y_raw) ** 2).mean() / M**2)
            out.append(
                DoaEstimate(
                    theta_hat=float(theta),
                    w=c.w,
                    alpha_hat=c.alpha,
                    power=mf,
                    iterations=sweeps,
                    converged=True,
                )
            )
        return out

    if K == 1:
        scores = _projection_scores(A_grid, R_hat)
        return make_estimates([thetas_grid[int(np.argmax(scores))]], 1)

    init = dft_two_stage(Y_raw, K, RefineConfig(P=10, half_width=3))
    if len(init) < K:
        return make_estimates([e.theta_hat for e in init], 0)
    idx = [int(np.argmin(np.abs(thetas_grid - e.theta_hat))) for e in init]
    for sweep in range(1, 11):
        moved = False
        for k in range(K):
            others = [idx[j] for j in range(K) if j != k]
            scores = _projection_scores(A_grid, R_hat, A_grid[:, others])
            best = int(np.argmax(scores))
            if best != idx[k]:
                idx[k] = best
                moved = True
        if not moved:
            break
    return make_estimates([thetas_grid[i] for i in idx], sweep)


def crb(thetas, M: int, T: int, snr_db: float) -> np.ndarray:
    """Deterministic CRB on each angle (radians^2) for unit-power sources.

    Uses the conditional bound with the expected (identity) source
    covariance; the single-source case reduces to
    ``6*sigma^2 / (T * pi^2 * cos^2(theta) * M * (M^2 - 1))``.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    K = len(thetas)
    if len(set(thetas.tolist())) != K:
        raise ValueError("angles must be pairwise distinct")
    sigma2 = 10.0 ** (-snr_db / 10.0)
    i = np.arange(M)[:, None]
    A = np.exp(-1j * np.pi * i * np.sin(thetas)[None, :])
    D = (-1j * np.pi * i * np.cos(thetas)[None, :]) * A
    Q, _ = np.linalg.qr(A)
    PD = D - Q @ (Q.conj().T @ D)
    H = D.conj().T @ PD
    F = np.real(H * np.eye(K))  # expected source covariance is identity
    if np.linalg.cond(F) > 1e12:
        warnings.warn(
            "CRB matrix is ill-conditioned; angles are nearly coincident",
            RuntimeWarning,
            stacklevel=2,
        )
    bound = (sigma2 / (2.0 * T)) * np.linalg.inv(F)
    return np.diag(bound).copy()
