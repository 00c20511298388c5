"""Complex-baseband PHY math for the downlink MU-MIMO link.

Normalized regularized zero-forcing (RZF) precoding with equal power per
scheduled stream, and the per-user SINR / achievable-rate computation that
follows from it:

    V   = H_B^H (H_B H_B^H + alpha I)^-1, columns rescaled to unit norm,
    R_i = B * log2(1 + pow_i |h_i v_i|^2 / (sum_{j!=i} pow_j |h_i v_j|^2 + sigma_i^2)).

Channel rows are linear-scale complex gains.  Path loss is folded into the
channel rows as an amplitude scale by the caller (see ``env``), so every
function here works on "effective" channels.

All functions are pure and safe for concurrent use on distinct inputs.
"""

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-10
# Generous sanity window (dB); presets use narrower per-scenario ranges.
PATH_LOSS_WINDOW_DB = (90.0, 180.0)


def dbm_to_watt(dbm: float) -> float:
    """P[W] = 10^((dBm - 30) / 10)."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class LinkBudget:
    """Link-budget constants shared by all rate computations.

    noise_variance_w and path_loss_db are per-user vectors; a scalar noise
    variance is broadcast to all users.
    """

    noise_variance_w: np.ndarray  # sigma_i^2, watts
    bandwidth_hz: float
    total_power_w: float
    path_loss_db: np.ndarray  # applied to the channel as an amplitude scale

    def __post_init__(self):
        self.path_loss_db = np.atleast_1d(np.asarray(self.path_loss_db, dtype=float))
        noise = np.atleast_1d(np.asarray(self.noise_variance_w, dtype=float))
        if noise.size == 1:
            noise = np.full(self.path_loss_db.size, float(noise[0]))
        self.noise_variance_w = noise
        if self.noise_variance_w.shape != self.path_loss_db.shape:
            raise ValueError("noise_variance_w and path_loss_db lengths differ")
        if np.any(self.noise_variance_w <= 0.0):
            raise ValueError("noise variances must be strictly positive")
        if not self.bandwidth_hz > 0.0:
            raise ValueError("bandwidth must be strictly positive")
        if not self.total_power_w > 0.0:
            raise ValueError("total power must be strictly positive")
        lo, hi = PATH_LOSS_WINDOW_DB
        if np.any(self.path_loss_db < lo) or np.any(self.path_loss_db > hi):
            raise ValueError(f"path loss outside sane window {PATH_LOSS_WINDOW_DB} dB")

    @property
    def n_users(self) -> int:
        return self.path_loss_db.size

    def path_gain(self) -> np.ndarray:
        """Linear power gain 10^(-PL/10) per user."""
        return 10.0 ** (-self.path_loss_db / 10.0)

    def channel_row_scale(self) -> np.ndarray:
        """Amplitude scale sqrt(10^(-PL/10)) applied to each channel row."""
        return np.sqrt(self.path_gain())


def default_alpha(link: LinkBudget) -> float:
    """Default RZF regularization: 0.01 * mean noise variance / total power.

    The ratio sigma^2/P has the same units as |h|^2, so this stays at a
    fixed fraction of the Gram-matrix scale regardless of path loss.
    """
    return 0.01 * float(np.mean(link.noise_variance_w)) / link.total_power_w


def rzf_precoder(h_scheduled: np.ndarray, alpha: float) -> np.ndarray:
    """Normalized RZF precoder for the scheduled users' channel rows.

    h_scheduled: (m, n_t) complex rows of the scheduled users, in commit order.
    Returns V: (n_t, m) with column j the unit-norm precoding vector of the
    j-th scheduled user.
    """
    h = np.asarray(h_scheduled, dtype=complex)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ValueError("expected a non-empty (m, n_t) channel matrix")
    m, n_t = h.shape
    if m > n_t:
        raise ValueError(f"cannot serve {m} streams with {n_t} antennas")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    gram = h @ h.conj().T + alpha * np.eye(m)
    try:
        # V = H^H G^-1; solve G X = H then take X^H (G is Hermitian).
        x = np.linalg.solve(gram, h)
    except np.linalg.LinAlgError as exc:
        raise ValueError("RZF system matrix is not invertible; use alpha > 0") from exc
    v = x.conj().T
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise ValueError("RZF produced a degenerate precoder column (zero channel row?)")
    return v / norms


def equal_power(total_power_w: float, n_scheduled: int) -> float:
    """Per-stream transmit power under equal allocation."""
    if n_scheduled < 1:
        raise ValueError("need at least one scheduled user")
    return total_power_w / n_scheduled


def rates(
    h: np.ndarray,
    scheduled: "list[int] | tuple[int, ...]",
    precoder: np.ndarray,
    powers,
    link: LinkBudget,
) -> np.ndarray:
    """Per-user achievable rates in bits/s; zero for unscheduled users.

    precoder columns must align with ``scheduled`` (commit order).  ``powers``
    is a scalar or a length-m vector aligned the same way.
    """
    h = np.asarray(h, dtype=complex)
    k = h.shape[0]
    out = np.zeros(k)
    if len(scheduled) == 0:
        return out
    idx = np.asarray(scheduled, dtype=int)
    pw = np.broadcast_to(np.asarray(powers, dtype=float), (idx.size,))
    gains = np.abs(h[idx] @ precoder) ** 2  # gains[i, j] = |h_i v_j|^2
    signal = pw * np.diagonal(gains)
    interference = gains @ pw - signal
    noise = link.noise_variance_w[idx]
    sinr = signal / (interference + noise)
    out[idx] = link.bandwidth_hz * np.log2(1.0 + sinr)
    return out
