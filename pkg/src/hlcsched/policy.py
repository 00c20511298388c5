"""Hybrid stochastic policy: new Gaussian policy, frozen reloaded policies,
and a queue-weighted expert rule, mixed with trainable reuse probabilities.

The learnable parameter vector is theta = [p; gamma0] where p is the reuse
probability simplex over components [new, old_1..old_N, expert] and gamma0 is
the flat parameter vector of the new policy's network.

The network is a small fully connected MLP (tanh hidden layers) with two
heads: action mean mu in R^K and per-action log standard deviation, the
latter clamped so the diagonal covariance stays in [1e-6, 100].  Forward and
backward passes are written directly in numpy: the trainer needs the exact
analytic score d/dtheta log pi(a|s), evaluated in batch over stored
experiences, and a bit-exact flat float64 parameter vector for snapshotting.

The expert ("DK") component is the queue-weighted rule: its action mean is
each user's total queued bits divided by the feature scale, approximated as a
narrow Gaussian so the mixture density and its gradient stay well defined.
"""

import struct

import numpy as np

from .env import EnvConfig, State, encode_state
from .wsr import floor_weights

LOG_STD_MIN = float(np.log(1e-3))
LOG_STD_MAX = float(np.log(10.0))
PARAM_BOX = 10.0  # each gamma coordinate is kept in [-PARAM_BOX, PARAM_BOX]
# Network outputs must stay bounded: the mean head is squashed smoothly to
# (-MU_BOUND, MU_BOUND), comfortably covering the scale of useful weight
# vectors while keeping stored-experience scores finite under parameter drift.
MU_BOUND = 8.0
LOG_PROB_FLOOR = -745.0  # ~log of the smallest positive double
DK_STD_DEFAULT = 0.05

_MAGIC = b"GPLY"
_FORMAT_VERSION = 1


class GaussianPolicy:
    """Diagonal-Gaussian policy network operating on flat parameter vectors.

    Parameters are stored as one float64 vector laid out as
    [W_1, b_1, ..., W_H, b_H, W_mu, b_mu, W_sigma, b_sigma] (row-major).
    All public methods accept a batch of feature rows (B, feature_dim).
    """

    def __init__(self, feature_dim: int, n_actions: int, hidden=(64, 64)):
        if feature_dim < 1 or n_actions < 1 or len(hidden) < 1:
            raise ValueError("invalid network dimensions")
        self.feature_dim = int(feature_dim)
        self.n_actions = int(n_actions)
        self.hidden = tuple(int(h) for h in hidden)
        dims = [self.feature_dim, *self.hidden]
        self.shapes: list[tuple] = []
        for i, h in enumerate(self.hidden):
            self.shapes.append((h, dims[i]))
            self.shapes.append((h,))
        last = self.hidden[-1]
        for _ in range(2):  # mu head, log-std head
            self.shapes.append((self.n_actions, last))
            self.shapes.append((self.n_actions,))
        self._sizes = [int(np.prod(s)) for s in self.shapes]
        self.n_params = int(sum(self._sizes))

    def same_arch(self, other: "GaussianPolicy") -> bool:
        return (self.feature_dim, self.n_actions, self.hidden) == \
            (other.feature_dim, other.n_actions, other.hidden)

    def unpack(self, gamma: np.ndarray):
        if gamma.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {gamma.shape}")
        views, offset = [], 0
        for shape, size in zip(self.shapes, self._sizes):
            views.append(gamma[offset:offset + size].reshape(shape))
            offset += size
        return views

    def init_params(self, rng: np.random.Generator,
                    log_std_init: float = float(np.log(0.5))) -> np.ndarray:
        """Scaled-Gaussian weights, zero biases, log-std biased at log_std_init."""
        gamma = np.zeros(self.n_params)
        params = self.unpack(gamma)
        for i in range(len(self.hidden)):
            w = params[2 * i]
            w[...] = rng.normal(0.0, 1.0 / np.sqrt(w.shape[1]), w.shape)
        w_mu, _, w_sigma, b_sigma = params[-4:]
        w_mu[...] = rng.normal(0.0, 1.0 / np.sqrt(w_mu.shape[1]), w_mu.shape)
        w_sigma[...] = 0.1 * rng.normal(0.0, 1.0 / np.sqrt(w_sigma.shape[1]), w_sigma.shape)
        b_sigma[...] = log_std_init
        return gamma

    def forward_cached(self, gamma: np.ndarray, x: np.ndarray):
        """(mu, log_std, cache) over a batch; log_std clamped."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.feature_dim:
            raise ValueError(f"feature length {x.shape[1]} != {self.feature_dim}")
        params = self.unpack(gamma)
        activations = [x]
        z = x
        for i in range(len(self.hidden)):
            w, b = params[2 * i], params[2 * i + 1]
            z = np.tanh(z @ w.T + b)
            activations.append(z)
        w_mu, b_mu, w_sigma, b_sigma = params[-4:]
        mu = MU_BOUND * np.tanh((z @ w_mu.T + b_mu) / MU_BOUND)
        raw_log_std = z @ w_sigma.T + b_sigma
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        return mu, log_std, (params, activations, raw_log_std)

    def forward(self, gamma: np.ndarray, x: np.ndarray):
        mu, log_std, _ = self.forward_cached(gamma, x)
        return mu, log_std

    @staticmethod
    def log_density(mu: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Per-row log N(a; mu, diag(exp(2 log_std)))."""
        diff = actions - mu
        var = np.exp(2.0 * log_std)
        k = mu.shape[-1]
        return (-0.5 * k * np.log(2.0 * np.pi)
                - np.sum(log_std, axis=-1)
                - 0.5 * np.sum(diff * diff / var, axis=-1))

    def weighted_score(self, gamma: np.ndarray, x: np.ndarray, actions: np.ndarray,
                       coeffs: np.ndarray, cache=None) -> np.ndarray:
        """Gradient wrt gamma of sum_b coeffs_b * log N(a_b; mu(s_b), Sigma(s_b)).

        One batched backward pass; the clamp on log_std contributes zero
        gradient where it is active.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        if cache is None:
            mu, log_std, cache = self.forward_cached(gamma, x)
        else:
            params, activations, raw_log_std = cache
            z = activations[-1]
            w_mu, b_mu, _, _ = params[-4:]
            mu = MU_BOUND * np.tanh((z @ w_mu.T + b_mu) / MU_BOUND)
            log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        params, activations, raw_log_std = cache

        diff = actions - mu
        var = np.exp(2.0 * log_std)
        # chain through the mean-head squashing: dmu/draw = 1 - (mu/MU_BOUND)^2
        d_mu = coeffs[:, None] * (diff / var) * (1.0 - (mu / MU_BOUND) ** 2)
        d_log_std = coeffs[:, None] * (diff * diff / var - 1.0)
        d_log_std *= (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)

        grad = np.zeros(self.n_params)
        grads = self.unpack(grad)
        w_mu, _, w_sigma, _ = params[-4:]
        z_last = activations[-1]
        grads[-4][...] = d_mu.T @ z_last
        grads[-3][...] = d_mu.sum(axis=0)
        grads[-2][...] = d_log_std.T @ z_last
        grads[-1][...] = d_log_std.sum(axis=0)
        dz = d_mu @ w_mu + d_log_std @ w_sigma
        for i in reversed(range(len(self.hidden))):
            z_i = activations[i + 1]
            da = dz * (1.0 - z_i * z_i)
            grads[2 * i][...] = da.T @ activations[i]
            grads[2 * i + 1][...] = da.sum(axis=0)
            if i > 0:
                dz = da @ params[2 * i]
        return grad


def save_policy(net: GaussianPolicy, gamma: np.ndarray) -> bytes:
    """Serialize (architecture, parameters) to bytes; round-trip is bit-exact.

    Layout: magic, format version, feature dim, action dim, hidden layer
    count and sizes (all little-endian uint32/uint64), then the flat
    parameter vector as little-endian float64.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (net.n_params,):
        raise ValueError("parameter vector does not match the architecture")
    header = struct.pack("<4sIIII", _MAGIC, _FORMAT_VERSION,
                         net.feature_dim, net.n_actions, len(net.hidden))
    header += struct.pack(f"<{len(net.hidden)}I", *net.hidden)
    header += struct.pack("<Q", net.n_params)
    return header + gamma.astype("<f8").tobytes()


def load_policy(data: bytes) -> "tuple[GaussianPolicy, np.ndarray]":
    """Inverse of save_policy; rejects wrong magic/version and bad lengths."""
    fixed = struct.calcsize("<4sIIII")
    if len(data) < fixed:
        raise ValueError("policy file truncated (header)")
    magic, version, feature_dim, n_actions, n_hidden = struct.unpack_from("<4sIIII", data)
    if magic != _MAGIC:
        raise ValueError("not a policy file (bad magic)")
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported policy format version {version}")
    offset = fixed
    hidden_size = struct.calcsize(f"<{n_hidden}I")
    if len(data) < offset + hidden_size + 8:
        raise ValueError("policy file truncated (architecture)")
    hidden = struct.unpack_from(f"<{n_hidden}I", data, offset)
    offset += hidden_size
    (n_params,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    net = GaussianPolicy(feature_dim, n_actions, hidden)
    if n_params != net.n_params:
        raise ValueError("parameter count does not match the declared architecture")
    if len(data) != offset + 8 * n_params:
        raise ValueError("policy file truncated or has trailing bytes")
    gamma = np.frombuffer(data, dtype="<f8", count=n_params, offset=offset)
    return net, gamma.astype(np.float64)


def dk_mean(state: State, config: EnvConfig) -> np.ndarray:
    """Queue-weighted expert action: total queued bits per user / q_scale."""
    out = np.empty(config.k)
    offset = 0
    for i, d in enumerate(config.deadlines):
        out[i] = state.queue_bits[offset:offset + d].sum() / config.q_scale_bits
        offset += d
    return out


def dk_mean_from_features(features: np.ndarray, config: EnvConfig) -> np.ndarray:
    """Same as dk_mean but from encoded feature rows (batch-friendly)."""
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    queue_part = feats[:, :config.sum_deadlines]
    sums = np.add.reduceat(queue_part, config.queue_offsets(), axis=1)
    return sums if features.ndim > 1 else sums[0]


def action_to_weights(action: np.ndarray) -> np.ndarray:
    """Map a raw (possibly negative) action to a valid priority weight vector."""
    return floor_weights(action)


def _logsumexp(terms: np.ndarray, axis=0) -> np.ndarray:
    peak = np.max(terms, axis=axis, keepdims=True)
    out = peak + np.log(np.sum(np.exp(terms - peak), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


class HybridPolicy:
    """Mixture policy pi_theta = sum_n p_n pi_n with theta = [p; gamma0].

    Component order: index 0 is the trainable new policy, 1..N are frozen
    reloaded policies, and the last index (when present) is the expert rule.
    Old and expert components contribute no gamma gradient by construction.
    Parameter vectors are treated as immutable snapshots during sampling.
    """

    def __init__(self, config: EnvConfig, gamma0: "np.ndarray | None" = None,
                 old_policies=(), include_dk: bool = True,
                 dk_std: float = DK_STD_DEFAULT, net: "GaussianPolicy | None" = None,
                 init_rng: "np.random.Generator | None" = None):
        self.config = config
        self.net = net or GaussianPolicy(config.feature_dim, config.k)
        if self.net.feature_dim != config.feature_dim or self.net.n_actions != config.k:
            raise ValueError("network dimensions do not match the environment")
        if gamma0 is None:
            gamma0 = self.net.init_params(init_rng or np.random.default_rng(0))
        self.gamma0 = np.asarray(gamma0, dtype=float).copy()
        self.old = []
        for old_net, old_gamma in old_policies:
            if old_net.feature_dim != config.feature_dim or old_net.n_actions != config.k:
                raise ValueError("old policy dimensions do not match the environment")
            frozen = np.asarray(old_gamma, dtype=float).copy()
            frozen.setflags(write=False)
            self.old.append((old_net, frozen))
        self.include_dk = bool(include_dk)
        if dk_std < 0:
            raise ValueError("dk_std must be >= 0")
        self.dk_std = float(dk_std)
        self.p = np.full(self.n_components, 1.0 / self.n_components)

    @property
    def n_components(self) -> int:
        return 1 + len(self.old) + (1 if self.include_dk else 0)

    @property
    def dk_index(self) -> "int | None":
        return self.n_components - 1 if self.include_dk else None

    @property
    def n_theta(self) -> int:
        return self.n_components + self.net.n_params

    def theta(self) -> np.ndarray:
        return np.concatenate([self.p, self.gamma0])

    def set_theta(self, theta: np.ndarray, validate: bool = True):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_theta,):
            raise ValueError("theta length mismatch")
        self.set_reuse_probs(theta[:self.n_components], validate=validate)
        self.gamma0 = theta[self.n_components:].copy()

    def set_reuse_probs(self, p, validate: bool = True):
        p = np.asarray(p, dtype=float).copy()
        if p.shape != (self.n_components,):
            raise ValueError("reuse probability length mismatch")
        if validate:
            if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
                raise ValueError("reuse probabilities outside [0, 1]")
            if abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("reuse probabilities do not sum to 1")
            p = np.clip(p, 0.0, 1.0)
            p /= p.sum()
        self.p = p

    def features(self, state: State) -> np.ndarray:
        return encode_state(state, self.config)

    # -- densities ---------------------------------------------------------

    def component_log_densities(self, x: np.ndarray, actions: np.ndarray):
        """(M, B) per-component log densities plus the new-policy cache."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        out = np.empty((self.n_components, x.shape[0]))
        mu0, ls0, cache = self.net.forward_cached(self.gamma0, x)
        out[0] = GaussianPolicy.log_density(mu0, ls0, actions)
        for j, (old_net, old_gamma) in enumerate(self.old, start=1):
            mu, ls = old_net.forward(old_gamma, x)
            out[j] = GaussianPolicy.log_density(mu, ls, actions)
        if self.include_dk:
            if self.dk_std <= 0:
                raise ValueError("dk_std must be > 0 to evaluate mixture densities")
            mu_dk = dk_mean_from_features(x, self.config)
            ls_dk = np.full_like(mu_dk, np.log(self.dk_std))
            out[-1] = GaussianPolicy.log_density(mu_dk, ls_dk, actions)
        return out, cache

    def _log_mixture(self, log_densities: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            log_p = np.where(self.p > 0.0, np.log(np.maximum(self.p, 1e-300)), -np.inf)
        return _logsumexp(log_p[:, None] + log_densities, axis=0)

    def log_prob_features(self, features: np.ndarray, action: np.ndarray) -> float:
        log_densities, _ = self.component_log_densities(features, action)
        value = float(self._log_mixture(log_densities)[0])
        return max(value, LOG_PROB_FLOOR)

    def log_prob(self, state: State, action: np.ndarray) -> float:
        return self.log_prob_features(self.features(state), action)

    # -- sampling ----------------------------------------------------------

    def sample_component_action(self, features: np.ndarray, m: int,
                                rng: np.random.Generator) -> np.ndarray:
        """Sample an action from component m's Gaussian."""
        x = np.atleast_2d(features)
        if self.include_dk and m == self.dk_index:
            mean = dk_mean_from_features(x, self.config)[0]
            std = self.dk_std
        else:
            net, gamma = (self.net, self.gamma0) if m == 0 else self.old[m - 1]
            mu, log_std = net.forward(gamma, x)
            mean, std = mu[0], np.exp(log_std[0])
        return mean + std * rng.standard_normal(self.config.k)

    def sample_action_features(self, features: np.ndarray, rng: np.random.Generator):
        """Draw component m ~ p, then the action from component m."""
        m = int(rng.choice(self.n_components, p=self.p))
        return self.sample_component_action(features, m, rng), m

    def sample_action(self, state: State, rng: np.random.Generator):
        return self.sample_action_features(self.features(state), rng)

    def component_mean(self, features: np.ndarray, m: int) -> np.ndarray:
        """Noise-free action of component m (for frozen evaluation)."""
        x = np.atleast_2d(features)
        if self.include_dk and m == self.dk_index:
            return dk_mean_from_features(x, self.config)[0]
        net, gamma = (self.net, self.gamma0) if m == 0 else self.old[m - 1]
        mu, _ = net.forward(gamma, x)
        return mu[0]

    # -- score function ----------------------------------------------------

    def score_batch(self, x: np.ndarray, actions: np.ndarray,
                    coeffs: np.ndarray) -> np.ndarray:
        """sum_b coeffs_b * d/dtheta log pi_theta(a_b | s_b), flat over [p; gamma0].

        d/dp_n log pi = pi_n / pi_theta (well defined also at p_n = 0);
        the gamma0 part carries the responsibility factor p_0 pi_0 / pi_theta.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        log_densities, cache = self.component_log_densities(x, actions)
        log_mix = self._log_mixture(log_densities)
        # pi_n / pi_theta, (M, B).  The ratio of a near-zero-probability
        # component can exceed float range; cap it so the gradient stays
        # finite (the surrogate step is projected, so only the direction of
        # such an entry matters).
        ratios = np.exp(np.minimum(log_densities - log_mix, 690.0))
        g_p = ratios @ coeffs
        with np.errstate(divide="ignore"):
            log_p0 = np.log(self.p[0]) if self.p[0] > 0.0 else -np.inf
        # responsibility p_0 pi_0 / pi_theta <= 1, safe in log space
        gamma_coeffs = coeffs * np.exp(log_p0 + log_densities[0] - log_mix)
        if np.any(gamma_coeffs != 0.0):
            g_gamma = self.net.weighted_score(self.gamma0, x, actions,
                                              gamma_coeffs, cache=cache)
        else:
            g_gamma = np.zeros(self.net.n_params)
        return np.concatenate([g_p, g_gamma])

    def grad_log_prob_features(self, features: np.ndarray, action: np.ndarray) -> np.ndarray:
        return self.score_batch(features, action, np.ones(1))

    def grad_log_prob(self, state: State, action: np.ndarray) -> np.ndarray:
        return self.grad_log_prob_features(self.features(state), action)
