"""Message-passing estimator on the block-sparse inverse-DFT model.

Each iteration runs a forward recursion and a backward recursion over a
factor graph with three variable layers: per-edge products ``x`` (one per
observation row, slot and snapshot), per-grid-point source amplitudes
``s`` with Gamma-distributed precisions, and per-grid-point kernel samples
``g`` driven by a fractional offset ``alpha``.  Sum-constraint and
extrinsic-division updates follow the belief-propagation rule; the
precision, offset-kernel and noise updates follow the mean-field rule.
The kernel factor is linearized at the previous offset estimate, and the
Gamma shape parameter is retuned from the spread of the precisions after
every backward recursion.

All updates are O(L*M*T) per iteration and are pure functions of the
state they receive; a single run mutates only its own state objects.
"""

from dataclasses import dataclass

import numpy as np

from .array_model import (
    GridDecomposition,
    dirichlet_kernel,
    dirichlet_kernel_slope,
)

__all__ = [
    "AlgoConfig",
    "EdgeState",
    "BeliefState",
    "DoaEstimate",
    "TraceRecord",
    "DivergenceError",
    "initialize",
    "forward_pass",
    "backward_pass",
    "kernel_derivative",
    "gaussian_extrinsic",
    "run",
    "extract_doas",
    "estimate_doas",
    "export_trace_csv",
    "export_beliefs_csv",
]

# |g|^2 floor before dividing a message by the kernel belief mean; a
# vanishing mean marks the message uninformative via a huge variance.
_GAIN_FLOOR = 1e-12
# |slope|^2 floor in the offset update for the same reason.
_SLOPE_FLOOR = 1e-30


@dataclass(frozen=True)
class AlgoConfig:
    """Hyperparameters, clamps and stopping rule of the estimator."""

    epsilon_init: float = 0.01
    eta: float = 1e-4
    lambda_init: float = 1.0
    sigma_s: float = 1e-5  # relative-change stopping threshold
    max_iter: int = 200
    var_floor: float = 1e-12
    var_cap: float = 1e12
    damping: float = 1.0  # convex weight on fresh backward messages; 1 = off

    def __post_init__(self):
        if self.var_floor <= 0 or self.var_cap <= self.var_floor:
            raise ValueError("need 0 < var_floor < var_cap")
        if self.sigma_s <= 0:
            raise ValueError("sigma_s must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.eta <= 0 or self.lambda_init <= 0 or self.epsilon_init < 0:
            raise ValueError("eta and lambda_init must be positive, epsilon_init >= 0")


@dataclass
class EdgeState:
    """Gaussian message parameters on the factor-graph edges.

    Row-layout arrays are indexed (observation row, slot, snapshot);
    grid-layout arrays (grid point, slot).  ``p_hat``/``v_p`` aggregate
    the backward x-messages per row, ``s_fwd_*`` the per-slot source
    messages per grid point, ``g_fwd_*`` the snapshot-aggregated kernel
    messages.  ``kernel_ref``/``kernel_slope`` cache the linearization of
    the kernel at the reference offsets for the current iteration.
    """

    x_fwd_mean: np.ndarray  # (M, L, T) complex
    x_fwd_var: np.ndarray  # (M, L, T)
    x_bwd_mean: np.ndarray  # (M, L, T) complex
    x_bwd_var: np.ndarray  # (M, L, T)
    p_hat: np.ndarray  # (M, T) complex
    v_p: np.ndarray  # (M, T)
    s_fwd_mean: np.ndarray  # (M, T) complex, grid layout
    s_fwd_var: np.ndarray  # (M, T)
    g_fwd_mean: np.ndarray  # (M, L) complex, grid layout
    g_fwd_var: np.ndarray  # (M, L)
    g_bwd_mean: np.ndarray  # (M, L) complex
    g_bwd_var: np.ndarray  # (M, L)
    alpha_msg_mean: np.ndarray  # (M, L)
    alpha_msg_var: np.ndarray  # (M, L)
    kernel_ref: np.ndarray  # (M, L) complex
    kernel_slope: np.ndarray  # (M, L) complex


@dataclass
class BeliefState:
    """Current beliefs of all model variables."""

    s_hat: np.ndarray  # (M, T) complex, source amplitude means
    v_s: np.ndarray  # (M, T)
    gamma_hat: np.ndarray  # (M,) source precisions
    alpha_hat: np.ndarray  # (M,) fractional offsets in [-0.5, 0.5]
    v_alpha: np.ndarray  # (M,)
    alpha_prev: np.ndarray  # (M,) linearization reference (last iteration)
    g_hat: np.ndarray  # (M, L) complex, kernel belief means
    v_g: np.ndarray  # (M, L)
    h_hat: np.ndarray  # (M, T) complex, noiseless-observation beliefs
    v_h: np.ndarray  # (M, T)
    lambda_hat: float  # noise precision
    epsilon: float  # Gamma shape of the precision prior


@dataclass(frozen=True)
class DoaEstimate:
    """One detected source."""

    theta_hat: float  # radians
    w: int  # integer bin of the selected grid point
    alpha_hat: float
    power: float  # mean over snapshots of |s_hat|^2
    iterations: int
    converged: bool


@dataclass(frozen=True)
class TraceRecord:
    """Per-iteration diagnostics of :func:`run`."""

    iteration: int
    relative_change: float
    lambda_hat: float
    epsilon: float


class DivergenceError(RuntimeError):
    """A message or belief became non-finite."""

    def __init__(self, stage: str, iteration: int | None = None):
        self.stage = stage
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"non-finite values in {stage}{where}")


def _check_finite(stage: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(stage)


def initialize(M: int, L: int, T: int, config: AlgoConfig):
    """Fresh edge and belief states for an M x T problem with L slots.

    Backward x-messages start at zero mean and unit variance, kernel
    belief means at one, source beliefs at zero mean and unit variance,
    offsets at zero; the noise precision starts at ``lambda_init`` and the
    row aggregates are consistent with the initial messages.
    """
    cplx = lambda *s: np.zeros(s, dtype=complex)
    ones = lambda *s: np.ones(s)
    edges = EdgeState(
        x_fwd_mean=cplx(M, L, T),
        x_fwd_var=ones(M, L, T),
        x_bwd_mean=cplx(M, L, T),
        x_bwd_var=ones(M, L, T),
        p_hat=cplx(M, T),
        v_p=np.full((M, T), float(L)),
        s_fwd_mean=cplx(M, T),
        s_fwd_var=ones(M, T),
        g_fwd_mean=np.ones((M, L), dtype=complex),
        g_fwd_var=ones(M, L),
        g_bwd_mean=np.ones((M, L), dtype=complex),
        g_bwd_var=ones(M, L),
        alpha_msg_mean=np.zeros((M, L)),
        alpha_msg_var=ones(M, L),
        kernel_ref=np.ones((M, L), dtype=complex),
        kernel_slope=cplx(M, L),
    )
    beliefs = BeliefState(
        s_hat=cplx(M, T),
        v_s=ones(M, T),
        gamma_hat=ones(M),
        alpha_hat=np.zeros(M),
        v_alpha=ones(M),
        alpha_prev=np.zeros(M),
        g_hat=np.ones((M, L), dtype=complex),
        v_g=ones(M, L),
        h_hat=cplx(M, T),
        v_h=ones(M, T),
        lambda_hat=float(config.lambda_init),
        epsilon=float(config.epsilon_init),
    )
    return edges, beliefs


def gaussian_extrinsic(belief_mean, belief_var, msg_mean, msg_var, var_cap=1e12):
    """Divide a Gaussian belief by one incoming Gaussian message.

    Returns ``(mean, var)`` of the leave-one-out message.  A division that
    produces a non-positive, non-finite or above-cap variance returns the
    belief mean with an uninformative ``var_cap`` variance instead.
    """
    belief_var = np.asarray(belief_var, dtype=float)
    msg_var = np.asarray(msg_var, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        prec = 1.0 / belief_var - 1.0 / msg_var
        var = 1.0 / prec
        mean = var * (
            np.asarray(belief_mean) / belief_var - np.asarray(msg_mean) / msg_var
        )
    bad = ~np.isfinite(var) | (var <= 0) | (var > var_cap)
    var = np.where(bad, var_cap, var)
    mean = np.where(bad, belief_mean, mean)
    return mean, var


def kernel_derivative(delta: int, alpha_ref: float, M: int) -> complex:
    """Derivative of the kernel sample at slot ``delta`` w.r.t. the offset.

    Equals ``(1/sqrt(M)) * sum_m (-j*2*pi*m/M) * exp(j*2*pi*m*(delta -
    alpha_ref)/M)``.
    """
    if not -0.5 <= alpha_ref <= 0.5:
        raise ValueError(f"alpha_ref must lie in [-0.5, 0.5], got {alpha_ref}")
    return complex(-dirichlet_kernel_slope(delta - alpha_ref, M))


def _gather(a: np.ndarray, grid: GridDecomposition) -> np.ndarray:
    # Row layout (row, slot, ...) -> grid layout (grid point, slot, ...).
    return a[grid.rows, np.arange(grid.L)[None, :]]


def _scatter(dst: np.ndarray, values: np.ndarray, grid: GridDecomposition) -> None:
    dst[grid.rows, np.arange(grid.L)[None, :]] = values


def _clip_var(v: np.ndarray, config: AlgoConfig) -> np.ndarray:
    return np.clip(v, config.var_floor, config.var_cap)


def _source_messages(xg_mean, xg_var, g_hat, config):
    # Per-slot messages toward the source amplitudes: divide out the
    # kernel belief mean; a vanishing |g|^2 yields an uninformative slot.
    g2 = np.maximum(np.abs(g_hat) ** 2, _GAIN_FLOOR)
    mean = xg_mean * np.conj(g_hat)[:, :, None] / g2[:, :, None]
    var = np.minimum(xg_var / g2[:, :, None], config.var_cap)
    return mean, var


def _kernel_messages(xg_mean, xg_var, s_hat, v_s):
    # Per-snapshot messages toward the kernel samples.
    snd = np.abs(s_hat) ** 2 + v_s  # (M, T), > 0 by the variance floor
    mean = xg_mean * np.conj(s_hat)[:, None, :] / snd[:, None, :]
    var = xg_var / snd[:, None, :]
    return mean, var


def forward_pass(Y, grid: GridDecomposition, edges: EdgeState, beliefs: BeliefState,
                 config: AlgoConfig):
    """One forward recursion: data -> sources -> kernels -> offsets.

    Refreshes the forward x-messages from the row aggregates, the source
    beliefs under the current precisions, the snapshot-aggregated kernel
    messages, and the offset beliefs via the kernel linearization at the
    previous offset estimates.  Mutates the states in place and returns
    them.
    """
    M, T = Y.shape
    L = grid.L

    # Observation-consistency messages toward each x edge (extrinsic sums).
    lam_inv = 1.0 / beliefs.lambda_hat
    edges.x_fwd_mean = Y[:, None, :] - edges.p_hat[:, None, :] + edges.x_bwd_mean
    edges.x_fwd_var = _clip_var(
        lam_inv + edges.v_p[:, None, :] - edges.x_bwd_var, config
    )
    _check_finite("forward x-message update", edges.x_fwd_mean)

    xg_mean = _gather(edges.x_fwd_mean, grid)
    xg_var = _gather(edges.x_fwd_var, grid)

    # Product of the per-slot source messages, then the source beliefs.
    s_msg_mean, s_msg_var = _source_messages(xg_mean, xg_var, beliefs.g_hat, config)
    inv = 1.0 / s_msg_var
    edges.s_fwd_var = _clip_var(1.0 / inv.sum(axis=1), config)
    edges.s_fwd_mean = edges.s_fwd_var * (s_msg_mean * inv).sum(axis=1)
    _check_finite("source message product", edges.s_fwd_mean, edges.s_fwd_var)

    beliefs.v_s = _clip_var(
        1.0 / (1.0 / edges.s_fwd_var + beliefs.gamma_hat[:, None]), config
    )
    beliefs.s_hat = edges.s_fwd_mean * (beliefs.v_s / edges.s_fwd_var)
    _check_finite("source belief update", beliefs.s_hat, beliefs.v_s)

    # Kernel messages per snapshot, aggregated across snapshots.
    g_msg_mean, g_msg_var = _kernel_messages(xg_mean, xg_var, beliefs.s_hat, beliefs.v_s)
    ginv = 1.0 / g_msg_var
    edges.g_fwd_var = _clip_var(1.0 / ginv.sum(axis=2), config)
    edges.g_fwd_mean = edges.g_fwd_var * (g_msg_mean * ginv).sum(axis=2)
    _check_finite("kernel message aggregation", edges.g_fwd_mean, edges.g_fwd_var)

    # Linearize the kernel at the previous offset estimates.
    u = grid.offsets[None, :] - beliefs.alpha_prev[:, None]
    edges.kernel_ref = dirichlet_kernel(u, M)
    edges.kernel_slope = -dirichlet_kernel_slope(u, M)

    # Offset messages: real/imag parts are combined by precision weighting,
    # which collapses to a projection on the kernel slope.
    slope2 = np.maximum(np.abs(edges.kernel_slope) ** 2, _SLOPE_FLOOR)
    edges.alpha_msg_var = _clip_var(edges.g_fwd_var / (2.0 * slope2), config)
    edges.alpha_msg_mean = (
        beliefs.alpha_prev[:, None]
        + (np.conj(edges.kernel_slope) * (edges.g_fwd_mean - edges.kernel_ref)).real
        / slope2
    )
    _check_finite("offset message update", edges.alpha_msg_mean)

    ainv = 1.0 / edges.alpha_msg_var
    beliefs.v_alpha = _clip_var(1.0 / ainv.sum(axis=1), config)
    raw = beliefs.v_alpha * (edges.alpha_msg_mean * ainv).sum(axis=1)
    # The uniform prior on the offset enters as a clip of the belief mean.
    beliefs.alpha_hat = np.clip(raw, -0.5, 0.5)
    _check_finite("offset belief update", beliefs.alpha_hat, beliefs.v_alpha)

    return edges, beliefs


def backward_pass(Y, grid: GridDecomposition, edges: EdgeState, beliefs: BeliefState,
                  config: AlgoConfig):
    """One backward recursion: precisions -> kernels -> data -> noise.

    Refreshes the source precisions and the prior-shape retune, the
    extrinsic messages back toward the x edges, the kernel beliefs, the
    row aggregates, the residual beliefs and the noise precision, then
    promotes the current offset estimates to linearization references.
    Mutates the states in place and returns them.
    """
    M, T = Y.shape

    # Source precisions from the posterior second moments, then the shape
    # retune from the spread of the precisions (log of mean minus mean of
    # log is nonnegative; tiny negatives from rounding are clamped).
    second = (np.abs(beliefs.s_hat) ** 2 + beliefs.v_s).sum(axis=1)
    beliefs.gamma_hat = (beliefs.epsilon + T) / (config.eta + second)
    _check_finite("precision update", beliefs.gamma_hat)
    spread = np.log(beliefs.gamma_hat.mean()) - np.log(beliefs.gamma_hat).mean()
    beliefs.epsilon = 0.5 * float(np.sqrt(max(spread, 0.0)))

    xg_mean = _gather(edges.x_fwd_mean, grid)
    xg_var = _gather(edges.x_fwd_var, grid)

    # Extrinsic source messages toward each x edge.
    s_msg_mean, s_msg_var = _source_messages(xg_mean, xg_var, beliefs.g_hat, config)
    sx_mean, sx_var = gaussian_extrinsic(
        beliefs.s_hat[:, None, :], beliefs.v_s[:, None, :],
        s_msg_mean, s_msg_var, config.var_cap,
    )
    _check_finite("extrinsic source message", sx_mean, sx_var)

    # Extrinsic offset messages toward each kernel factor.
    ag_mean, ag_var = gaussian_extrinsic(
        beliefs.alpha_hat[:, None], beliefs.v_alpha[:, None],
        edges.alpha_msg_mean, edges.alpha_msg_var, config.var_cap,
    )
    _check_finite("extrinsic offset message", ag_mean, ag_var)

    # Kernel beliefs through the linearization.
    edges.g_bwd_mean = edges.kernel_ref + edges.kernel_slope * (
        ag_mean - beliefs.alpha_prev[:, None]
    )
    edges.g_bwd_var = _clip_var(ag_var * np.abs(edges.kernel_slope) ** 2, config)
    beliefs.v_g = _clip_var(
        1.0 / (1.0 / edges.g_fwd_var + 1.0 / edges.g_bwd_var), config
    )
    beliefs.g_hat = beliefs.v_g * (
        edges.g_fwd_mean / edges.g_fwd_var + edges.g_bwd_mean / edges.g_bwd_var
    )
    _check_finite("kernel belief update", beliefs.g_hat, beliefs.v_g)

    # Extrinsic kernel messages toward each x edge (per snapshot).
    g_msg_mean, g_msg_var = _kernel_messages(xg_mean, xg_var, beliefs.s_hat, beliefs.v_s)
    gx_mean, gx_var = gaussian_extrinsic(
        beliefs.g_hat[:, :, None], beliefs.v_g[:, :, None],
        g_msg_mean, g_msg_var, config.var_cap,
    )
    _check_finite("extrinsic kernel message", gx_mean, gx_var)

    # Product of two independent Gaussians: exact mean and second-moment
    # variance of the backward x-messages.
    xb_mean = sx_mean * gx_mean
    xb_var = _clip_var(
        np.abs(sx_mean) ** 2 * gx_var + np.abs(gx_mean) ** 2 * sx_var + sx_var * gx_var,
        config,
    )
    if config.damping < 1.0:
        d = config.damping
        xb_mean = d * xb_mean + (1.0 - d) * _gather(edges.x_bwd_mean, grid)
        xb_var = d * xb_var + (1.0 - d) * _gather(edges.x_bwd_var, grid)
    _scatter(edges.x_bwd_mean, xb_mean, grid)
    _scatter(edges.x_bwd_var, xb_var, grid)
    _check_finite("backward x-message update", edges.x_bwd_mean, edges.x_bwd_var)

    edges.p_hat = edges.x_bwd_mean.sum(axis=1)
    edges.v_p = _clip_var(edges.x_bwd_var.sum(axis=1), config)

    # Residual beliefs and the noise-precision refresh.
    beliefs.v_h = _clip_var(1.0 / (beliefs.lambda_hat + 1.0 / edges.v_p), config)
    beliefs.h_hat = beliefs.v_h * (Y * beliefs.lambda_hat + edges.p_hat / edges.v_p)
    _check_finite("residual belief update", beliefs.h_hat, beliefs.v_h)
    total = float((np.abs(Y - beliefs.h_hat) ** 2 + beliefs.v_h).sum())
    beliefs.lambda_hat = M * T / total
    _check_finite("noise precision update", np.array([beliefs.lambda_hat]))

    beliefs.alpha_prev = beliefs.alpha_hat.copy()
    return edges, beliefs


def run(Y, grid: GridDecomposition, config: AlgoConfig | None = None):
    """Iterate forward/backward recursions until the sources settle.

    Stops when the relative change of the source means across iterations
    drops to ``sigma_s`` (a zero denominator counts as converged, checked
    from the second iteration on) or after ``max_iter`` iterations.
    Returns ``(beliefs, trace)``; deterministic in ``(Y, config)``.
    """
    Y = np.asarray(Y, dtype=complex)
    if Y.ndim != 2 or Y.shape[0] != grid.M:
        raise ValueError(f"Y must be an (M={grid.M}) x T matrix, got {Y.shape}")
    config = config or AlgoConfig()
    M, T = Y.shape
    edges, beliefs = initialize(M, grid.L, T, config)
    trace: list[TraceRecord] = []
    s_prev = beliefs.s_hat.copy()
    for it in range(1, config.max_iter + 1):
        try:
            forward_pass(Y, grid, edges, beliefs, config)
            backward_pass(Y, grid, edges, beliefs, config)
        except DivergenceError as exc:
            raise DivergenceError(exc.stage, iteration=it) from None
        num = float((np.abs(beliefs.s_hat - s_prev) ** 2).sum())
        den = float((np.abs(s_prev) ** 2).sum())
        if den > 0.0:
            change = num / den
        else:
            change = 0.0 if num == 0.0 else np.inf
        trace.append(
            TraceRecord(
                iteration=it,
                relative_change=change,
                lambda_hat=beliefs.lambda_hat,
                epsilon=beliefs.epsilon,
            )
        )
        if it >= 2 and change <= config.sigma_s:
            break
        s_prev = beliefs.s_hat.copy()
    return beliefs, trace


def extract_doas(beliefs: BeliefState, K: int, grid: GridDecomposition,
                 iterations: int = 0, converged: bool = True):
    """Pick the K strongest separable grid points and read off directions.

    Grid points are ranked by mean posterior power; a greedy selection
    suppresses neighbors within floor(L/2) bins (circularly) of an
    accepted peak.  Only points with strictly positive mean squared
    amplitude qualify, so fewer than K estimates signal a shortfall.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    M, L = grid.M, grid.L
    mean_sq = (np.abs(beliefs.s_hat) ** 2).mean(axis=1)
    score = mean_sq + beliefs.v_s.mean(axis=1)
    _check_finite("direction extraction", score, beliefs.alpha_hat)
    radius = L // 2
    order = np.argsort(-score, kind="stable")
    chosen: list[int] = []
    for m in order:
        if mean_sq[m] <= 0.0:
            continue
        dist = np.abs(np.asarray(chosen) - m)
        if chosen and np.min(np.minimum(dist, M - dist)) <= radius:
            continue
        chosen.append(int(m))
        if len(chosen) == K:
            break
    estimates = []
    for m in chosen:
        w = int(grid.w_values[m])
        alpha = float(beliefs.alpha_hat[m])
        # Peaks folded onto the grid edge can step just past the physical
        # range; pull them back to the boundary.
        shifted = float(np.clip(w + alpha, -M / 2, M / 2))
        theta = float(np.arcsin(2.0 * shifted / M))
        estimates.append(
            DoaEstimate(
                theta_hat=theta,
                w=w,
                alpha_hat=alpha,
                power=float(mean_sq[m]),
                iterations=iterations,
                converged=converged,
            )
        )
    return estimates


def estimate_doas(Y, grid: GridDecomposition, K: int,
                  config: AlgoConfig | None = None):
    """Run the estimator and extract K directions.

    Returns ``(estimates, beliefs, trace)``.
    """
    config = config or AlgoConfig()
    beliefs, trace = run(Y, grid, config)
    converged = trace[-1].relative_change <= config.sigma_s
    estimates = extract_doas(
        beliefs, K, grid, iterations=len(trace), converged=converged
    )
    return estimates, beliefs, trace


def export_trace_csv(trace, path) -> None:
    """Write per-iteration diagnostics as CSV."""
    with open(path, "w") as fh:
        fh.write("iteration,relative_change,lambda_hat,epsilon\n")
        for rec in trace:
            fh.write(
                f"{rec.iteration},{rec.relative_change!r},"
                f"{rec.lambda_hat!r},{rec.epsilon!r}\n"
            )


def export_beliefs_csv(beliefs: BeliefState, grid: GridDecomposition, path) -> None:
    """Write a per-grid-point belief snapshot as CSV."""
    mean_power = (np.abs(beliefs.s_hat) ** 2 + beliefs.v_s).mean(axis=1)
    with open(path, "w") as fh:
        fh.write("grid_index,w,gamma_hat,alpha_hat,mean_power\n")
        for m in range(grid.M):
            fh.write(
                f"{m},{int(grid.w_values[m])},{beliefs.gamma_hat[m]!r},"
                f"{beliefs.alpha_hat[m]!r},{float(mean_power[m])!r}\n"
            )
