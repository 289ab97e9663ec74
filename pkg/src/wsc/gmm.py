"""Gaussian-mixture gradient encoding of walk fields.

Every walk field is a set of K path attribute vectors of length q = t*d.
The encoder scores them under a diagonal mixture with softmax weights
``w = softmax(alpha)`` and standard deviations ``sigma = exp(rho)``, and
returns the gradient of the field log-likelihood with respect to
(alpha, mu, sigma), laid out as ``[alpha_1..C | mu_1..C | sigma_1..C]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, UsageError

LOG_2PI = np.log(2.0 * np.pi)


def logsumexp(a, axis=None, keepdims=False):
    # max-shifted; cheaper than scipy's version on the small arrays used here
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else (np.squeeze(out, axis=axis) if axis is not None else out.item())


@dataclass
class GmmParameterSet:
    scale: int
    alpha: np.ndarray  # (C,)
    mu: np.ndarray  # (C, q)
    rho: np.ndarray  # (C, q)

    @classmethod
    def initialize(cls, scale, n_components, n_features, rng, mean_std=0.1):
        q = scale * n_features
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        return cls(
            scale,
            np.zeros(n_components),
            rng.normal(0.0, mean_std, size=(n_components, q)),
            np.zeros((n_components, q)),
        )

    @property
    def n_components(self) -> int:
        return self.alpha.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.alpha - logsumexp(self.alpha))

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.rho)

    @property
    def feature_size(self) -> int:
        return (2 * self.dim + 1) * self.n_components


def feature_size(t, d, C) -> int:
    return (2 * t * d + 1) * C


def _field_array(params, field):
    x = getattr(field, "path_attributes", field)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    scale = getattr(field, "scale", params.scale)
    if scale != params.scale:
        raise DomainError(f"field scale {scale} does not match mixture scale {params.scale}")
    if x.shape[-1] != params.dim:
        raise DomainError(f"path attribute length {x.shape[-1]} != mixture dimension {params.dim}")
    return x


def _scores(alpha, mu, rho, x):
    """Standardized residuals and per-component joint log-scores.

    x: (..., K, q) -> z: (..., K, C, q), logp: (..., K, C)
    """
    inv_sigma = np.exp(-rho)
    z = (x[..., None, :] - mu) * inv_sigma
    q = mu.shape[-1]
    log_norm = -0.5 * q * LOG_2PI - rho.sum(axis=-1)
    log_w = alpha - logsumexp(alpha)
    logp = log_w + log_norm - 0.5 * np.sum(z * z, axis=-1)
    return z, logp


def log_likelihood(params: GmmParameterSet, field) -> float:
    """Field log-likelihood ``sum_k log sum_c w_c N(x_k; mu_c, sigma_c^2)``."""
    x = _field_array(params, field)
    _, logp = _scores(params.alpha, params.mu, params.rho, x)
    return float(logsumexp(logp, axis=-1).sum())


def posteriors(params: GmmParameterSet, field) -> np.ndarray:
    """Responsibilities Q (K x C), rows summing to one."""
    x = _field_array(params, field)
    _, logp = _scores(params.alpha, params.mu, params.rho, x)
    return np.exp(logp - logsumexp(logp, axis=-1, keepdims=True))


class MixtureEncoder:
    """Batched forward/backward of the gradient-feature map.

    ``forward`` takes path attributes of shape (N, K, q) and returns
    features of shape (N, (2q + 1) C). ``backward`` returns the
    vector-Jacobian products with respect to alpha, mu, rho and the inputs.

    Residuals ``x - mu`` are never materialized per component; every term
    is expanded into posterior-weighted moments of x and x**2 so the work
    reduces to matrix products.
    """

    def __init__(self, alpha, mu, rho):
        self.alpha, self.mu, self.rho = alpha, mu, rho
        self._cache = None

    def forward(self, x):
        alpha, mu, rho = self.alpha, self.mu, self.rho
        N, K, q = x.shape
        if q != mu.shape[1]:
            raise DomainError(f"path attribute length {q} != mixture dimension {mu.shape[1]}")
        C = alpha.shape[0]
        iv = np.exp(-rho)
        iv2 = iv * iv
        x2 = x * x
        quad = x2 @ iv2.T - 2.0 * (x @ (mu * iv2).T) + np.sum(mu * mu * iv2, axis=1)
        log_w = alpha - logsumexp(alpha)
        logp = log_w + (-0.5 * q * LOG_2PI - rho.sum(axis=1)) - 0.5 * quad
        Q = np.exp(logp - logp.max(axis=-1, keepdims=True))
        Q /= Q.sum(axis=-1, keepdims=True)
        w = np.exp(log_w)

        Qt = Q.transpose(0, 2, 1)
        S0 = Q.sum(axis=1)
        Sx = Qt @ x
        Sx2 = Qt @ x2
        S0e = S0[..., None]
        f_alpha = S0 - K * w
        f_mu = (Sx - S0e * mu) * iv2
        D2 = Sx2 - 2.0 * mu * Sx + S0e * (mu * mu)
        f_sigma = D2 * (iv2 * iv) - S0e * iv
        self._cache = (x, x2, Q, S0, Sx, D2, f_mu, w, iv, K)
        return np.concatenate(
            [f_alpha, f_mu.reshape(N, C * q), f_sigma.reshape(N, C * q)], axis=1
        )

    def backward(self, upstream):
        if self._cache is None:
            raise UsageError("backward called before forward")
        x, x2, Q, S0, Sx, D2, f_mu, w, iv, K = self._cache
        mu = self.mu
        N, _, q = x.shape
        C = w.shape[0]
        upstream = np.asarray(upstream, dtype=float).reshape(N, -1)
        g_alpha = upstream[:, :C]
        g_mu = upstream[:, C:C + C * q].reshape(N, C, q)
        g_sigma = upstream[:, C + C * q:].reshape(N, C, q)

        iv2 = iv * iv
        iv3 = iv2 * iv
        a = g_mu * iv2
        b = g_sigma * iv3
        bmu = b * mu
        # r[n, k, c]: derivative of the objective w.r.t. Q at fixed parameters
        r = (
            g_alpha[:, None, :]
            + x @ a.transpose(0, 2, 1)
            - np.sum(a * mu, axis=2)[:, None, :]
            + x2 @ b.transpose(0, 2, 1)
            - 2.0 * (x @ bmu.transpose(0, 2, 1))
            + np.sum(bmu * mu - g_sigma * iv, axis=2)[:, None, :]
        )
        e = Q * (r - np.sum(Q * r, axis=-1, keepdims=True))

        e_flat = e.reshape(-1, C)
        e_sum = e_flat.sum(axis=0)
        E1 = e_flat.T @ x.reshape(-1, q)
        E2 = e_flat.T @ x2.reshape(-1, q)
        S0e = S0[..., None]

        g_alpha_total = g_alpha.sum(axis=0)
        d_alpha = e_sum - K * w * (g_alpha_total - np.dot(g_alpha_total, w))
        d_mu = (
            (E1 - e_sum[:, None] * mu) * iv2
            - np.sum(g_mu * S0e, axis=0) * iv2
            - 2.0 * np.sum(g_sigma * (Sx - S0e * mu), axis=0) * iv3
        )
        d_rho = (
            (E2 - 2.0 * mu * E1 + e_sum[:, None] * mu * mu) * iv2
            - e_sum[:, None]
            - 2.0 * np.sum(g_mu * f_mu, axis=0)
            + np.sum(g_sigma * (S0e * iv - 3.0 * D2 * iv3), axis=0)
        )
        Qb = Q @ b
        d_x = (
            x * (2.0 * Qb - e @ iv2)
            + e @ (mu * iv2)
            + Q @ a
            - 2.0 * (Q @ bmu)
        )
        return d_alpha, d_mu, d_rho, d_x


def gradient_features(params: GmmParameterSet, field) -> np.ndarray:
    x = _field_array(params, field)
    return MixtureEncoder(params.alpha, params.mu, params.rho).forward(x[None])[0]


def encoder_backward(params: GmmParameterSet, field, upstream):
    """VJP of :func:`gradient_features` for one field.

    Returns ``(d_alpha, d_mu, d_rho, d_path_attributes)``.
    """
    x = _field_array(params, field)
    enc = MixtureEncoder(params.alpha, params.mu, params.rho)
    enc.forward(x[None])
    d_alpha, d_mu, d_rho, d_x = enc.backward(np.asarray(upstream)[None])
    return d_alpha, d_mu, d_rho, d_x[0]
