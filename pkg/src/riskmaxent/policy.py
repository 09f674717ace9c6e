"""Diagonal-Gaussian policy: MLP mean network plus a trainable log-std vector.

Parameters live in one flat float64 vector with a fixed layout, so
optimizers and gradient estimators never care about network structure:

    [W1 (p*h1, row-major), b1, W2 (h1*h2), b2, ..., Wout (h_last*q), bout,
     log_std (q)]

Hidden activations are ReLU (subgradient 0 at 0), the output layer is
linear, and the standard deviation is state-independent. All gradients are
exact reverse-mode derivatives computed in closed form; a forward-mode
directional derivative of the mean is provided for Fisher-vector products.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))

# log-std is clamped to this interval after every update to keep the
# exploration noise from collapsing or exploding.
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_CKPT_MAGIC = b"RMXCKPT1"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class ActionSample:
    action: np.ndarray
    log_prob: float


class GaussianPolicy:
    """Shape and math of the policy network; parameters are passed in.

    ``dims`` is the full layer chain (state_dim, hidden..., action_dim).
    Parameter vectors are immutable snapshots from the caller's point of
    view: every method is a pure function of (params, inputs).
    """

    def __init__(self, state_dim: int, action_dim: int, hidden: Sequence[int] = (300, 300)):
        if state_dim < 1 or action_dim < 1 or any(h < 1 for h in hidden):
            raise ValueError("all layer sizes must be positive")
        self.dims = (int(state_dim), *map(int, hidden), int(action_dim))
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self._offsets = []
        off = 0
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            self._offsets.append((off, off + fan_in * fan_out))
            off += fan_in * fan_out
            self._offsets.append((off, off + fan_out))
            off += fan_out
        self._log_std_slice = (off, off + self.action_dim)
        self.param_count = off + self.action_dim

    # -- parameter layout -------------------------------------------------

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases and log-std 0."""
        params = np.zeros(self.param_count)
        for layer, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            start, stop = self._offsets[2 * layer]
            params[start:stop] = w.ravel()
        return params

    def unpack(self, params: np.ndarray):
        """Views (W, b) per layer plus the log-std vector."""
        layers = []
        for layer, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            ws, we = self._offsets[2 * layer]
            bs, be = self._offsets[2 * layer + 1]
            layers.append((params[ws:we].reshape(fan_in, fan_out), params[bs:be]))
        ls, le = self._log_std_slice
        return layers, params[ls:le]

    def pack(self, layers, log_std) -> np.ndarray:
        params = np.empty(self.param_count, dtype=np.float64)
        for layer, (w, b) in enumerate(layers):
            ws, we = self._offsets[2 * layer]
            bs, be = self._offsets[2 * layer + 1]
            params[ws:we] = np.asarray(w, dtype=np.float64).ravel()
            params[bs:be] = np.asarray(b, dtype=np.float64)
        ls, le = self._log_std_slice
        params[ls:le] = np.asarray(log_std, dtype=np.float64)
        return params

    def log_std(self, params: np.ndarray) -> np.ndarray:
        ls, le = self._log_std_slice
        return params[ls:le]

    def clamp_log_std(self, params: np.ndarray) -> np.ndarray:
        """Copy of params with log-std clipped to [LOG_STD_MIN, LOG_STD_MAX]."""
        out = params.copy()
        ls, le = self._log_std_slice
        np.clip(out[ls:le], LOG_STD_MIN, LOG_STD_MAX, out=out[ls:le])
        return out

    # -- forward ----------------------------------------------------------

    def _forward(self, params: np.ndarray, states: np.ndarray, keep_cache: bool):
        layers, _ = self.unpack(params)
        x = states
        cache = [x] if keep_cache else None
        for i, (w, b) in enumerate(layers):
            z = np.matmul(x, w)
            z += b
            if i < len(layers) - 1:
                np.maximum(z, 0.0, out=z)
                x = z
                if keep_cache:
                    cache.append(x)
            else:
                x = z
        return (x, cache) if keep_cache else (x, None)

    def forward_with_cache(self, params: np.ndarray, states: np.ndarray):
        """Mean plus per-layer activations, reusable by the backward pass."""
        return self._forward(params, np.atleast_2d(states), keep_cache=True)

    def log_prob_from_mean(self, params: np.ndarray, mu: np.ndarray, actions: np.ndarray):
        """Log-densities given precomputed means (skips the forward pass)."""
        return self._log_prob_from_mean(params, mu, actions)

    def forward_mean(self, params: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Mean action(s) for one state (p,) or a batch (n, p)."""
        single = states.ndim == 1
        x = np.atleast_2d(np.asarray(states, dtype=params.dtype))
        mu, _ = self._forward(params, x, keep_cache=False)
        return mu[0] if single else mu

    def log_prob(self, params: np.ndarray, states: np.ndarray, actions: np.ndarray):
        """Diagonal-Gaussian log-density of actions at the network mean."""
        single = np.asarray(states).ndim == 1
        s = np.atleast_2d(np.asarray(states, dtype=params.dtype))
        a = np.atleast_2d(np.asarray(actions, dtype=params.dtype))
        mu = self.forward_mean(params, s)
        lp = self._log_prob_from_mean(params, mu, a)
        return float(lp[0]) if single else lp

    def _log_prob_from_mean(self, params, mu, actions):
        _, log_std = self.unpack(params)
        inv_var = np.exp(-2.0 * log_std)
        resid = actions - mu
        return (
            -0.5 * np.sum(resid * resid * inv_var, axis=1)
            - np.sum(log_std)
            - 0.5 * self.action_dim * _LOG_2PI
        )

    def sample_action(self, params: np.ndarray, state: np.ndarray, rng: np.random.Generator) -> ActionSample:
        """Draw one action a = mu + exp(log_std) * z with its log-density."""
        actions, log_probs = self.sample_actions(params, state[None, :], rng)
        return ActionSample(action=actions[0], log_prob=float(log_probs[0]))

    def sample_actions(self, params: np.ndarray, states: np.ndarray, rng: np.random.Generator):
        """Batched sampling; returns (actions (n, q), log_probs (n,))."""
        _, log_std = self.unpack(params)
        mu, _ = self._forward(params, np.asarray(states, dtype=params.dtype), keep_cache=False)
        z = rng.standard_normal(size=mu.shape)
        actions = mu + np.exp(log_std) * z
        return actions, self._log_prob_from_mean(params, mu, actions)

    # -- reverse mode -----------------------------------------------------

    def weighted_log_prob_grad(
        self,
        params: np.ndarray,
        states: np.ndarray,
        actions: np.ndarray,
        weights: Optional[np.ndarray] = None,
        mu: Optional[np.ndarray] = None,
        cache: Optional[list] = None,
    ) -> np.ndarray:
        """Gradient of sum_i w_i * log pi(a_i | s_i) w.r.t. every parameter.

        ``mu``/``cache`` from :meth:`forward_with_cache` (or row slices of
        them) skip the internal forward pass.
        """
        a = np.atleast_2d(np.asarray(actions, dtype=params.dtype))
        layers, log_std = self.unpack(params)
        if mu is None or cache is None:
            s = np.atleast_2d(np.asarray(states, dtype=params.dtype))
            mu, cache = self._forward(params, s, keep_cache=True)
        inv_var = np.exp(-2.0 * log_std)
        resid = a - mu
        g_out = resid * inv_var
        if weights is not None:
            w = np.asarray(weights, dtype=params.dtype)
            g_out = g_out * w[:, None]
            d_log_std = ((resid * resid) * inv_var - 1.0).T @ w
        else:
            d_log_std = np.sum((resid * resid) * inv_var - 1.0, axis=0)
        grad = np.empty(self.param_count, dtype=params.dtype)
        g = g_out
        for i in range(len(layers) - 1, -1, -1):
            w_i, _ = layers[i]
            x_in = cache[i]
            ws, we = self._offsets[2 * i]
            bs, be = self._offsets[2 * i + 1]
            grad[ws:we] = (x_in.T @ g).ravel()
            grad[bs:be] = g.sum(axis=0)
            if i > 0:
                g = (g @ w_i.T) * (cache[i] > 0.0)
        ls, le = self._log_std_slice
        grad[ls:le] = d_log_std
        return grad

    def log_prob_grad(self, params: np.ndarray, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Exact gradient of log pi(action | state) w.r.t. the flat parameters."""
        return self.weighted_log_prob_grad(params, state[None, :], action[None, :])

    # -- forward mode / Fisher --------------------------------------------

    def _mean_jvp(self, params, v, cache):
        """Directional derivative of the mean along flat direction v, at the
        ReLU activation pattern recorded in cache."""
        layers, _ = self.unpack(params)
        v_layers, _ = self.unpack(np.asarray(v, dtype=params.dtype))
        d = None
        for i, ((w, _), (vw, vb)) in enumerate(zip(layers, v_layers)):
            x_in = cache[i]
            dz = x_in @ vw + vb
            if d is not None:
                dz = dz + d @ w
            if i < len(layers) - 1:
                d = dz * (cache[i + 1] > 0.0)
            else:
                d = dz
        return d

    def fisher_vector_product(
        self, params: np.ndarray, states: np.ndarray, v: np.ndarray, damping: float = 0.0
    ) -> np.ndarray:
        """Product of the analytic Gaussian Fisher matrix (averaged over the
        given states) with a flat vector.

        Mean-path block J^T diag(1/sigma^2) J via forward-over-reverse at
        fixed ReLU masks; the log-std block is exactly 2 I.
        """
        s = np.atleast_2d(np.asarray(states, dtype=params.dtype))
        n = s.shape[0]
        layers, log_std = self.unpack(params)
        _, cache = self._forward(params, s, keep_cache=True)
        du = self._mean_jvp(params, v, cache)
        g = du * np.exp(-2.0 * log_std)
        out = np.zeros(self.param_count, dtype=np.float64)
        for i in range(len(layers) - 1, -1, -1):
            w_i, _ = layers[i]
            x_in = cache[i]
            ws, we = self._offsets[2 * i]
            bs, be = self._offsets[2 * i + 1]
            out[ws:we] = (x_in.T @ g).ravel()
            out[bs:be] = g.sum(axis=0)
            if i > 0:
                g = (g @ w_i.T) * (cache[i] > 0.0)
        out /= n
        ls, le = self._log_std_slice
        out[ls:le] = 2.0 * np.asarray(v, dtype=np.float64)[ls:le]
        if damping:
            out += damping * np.asarray(v, dtype=np.float64)
        return out

    def kl_to(self, params_old: np.ndarray, params_new: np.ndarray, states: np.ndarray) -> float:
        """Mean closed-form KL(pi_old(.|s) || pi_new(.|s)) over the states."""
        s = np.atleast_2d(np.asarray(states, dtype=np.float64))
        mu_old = self.forward_mean(params_old, s)
        mu_new = self.forward_mean(params_new, s)
        _, ls_old = self.unpack(params_old)
        _, ls_new = self.unpack(params_new)
        var_old = np.exp(2.0 * ls_old)
        inv_var_new = np.exp(-2.0 * ls_new)
        per_dim = (
            ls_new
            - ls_old
            + 0.5 * (var_old + (mu_new - mu_old) ** 2) * inv_var_new
            - 0.5
        )
        return float(np.mean(np.sum(per_dim, axis=1)))

    # -- persistence --------------------------------------------------------

    def save_checkpoint(self, params: np.ndarray, path) -> None:
        """Binary checkpoint: magic, version, layer dims, float64 params (LE)."""
        header = _CKPT_MAGIC + struct.pack(
            "<II", _CKPT_VERSION, len(self.dims)
        ) + struct.pack(f"<{len(self.dims)}I", *self.dims)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.asarray(params, dtype="<f8").tobytes())

    @classmethod
    def load_checkpoint(cls, path):
        """Read a checkpoint; returns (policy, params)."""
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a policy checkpoint")
        version, ndims = struct.unpack("<II", blob[8:16])
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        dims = struct.unpack(f"<{ndims}I", blob[16 : 16 + 4 * ndims])
        params = np.frombuffer(blob[16 + 4 * ndims :], dtype="<f8").astype(np.float64)
        policy = cls(dims[0], dims[-1], hidden=dims[1:-1])
        if params.size != policy.param_count:
            raise ValueError(
                f"{path}: expected {policy.param_count} parameters, found {params.size}"
            )
        return policy, params
