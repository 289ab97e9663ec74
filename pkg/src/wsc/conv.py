"""Walk-steered convolution layer."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .exceptions import UsageError
from .gmm import MixtureEncoder, feature_size
from .nn import Linear, Parameter, ReLU
from .walks import path_attributes, walk_scales


def l2_normalize(F, eps=1e-12):
    norm = np.sqrt(np.sum(F * F, axis=1, keepdims=True) + eps)
    return F / norm, norm


def l2_normalize_backward(Fn, norm, upstream):
    return (upstream - Fn * np.sum(Fn * upstream, axis=1, keepdims=True)) / norm


def signed_sqrt(F, eps=1e-2):
    """Smooth ``sign(F) * sqrt(|F|)``, finite slope at zero."""
    root = np.sqrt(np.abs(F) + eps)
    return np.sign(F) * (root - np.sqrt(eps)), root


def signed_sqrt_backward(root, upstream):
    return upstream / (2.0 * root)


def scatter_rows(index, values, n_rows):
    """``out[index[i]] += values[i]`` for 2-D ``values``."""
    S = sp.csr_matrix(
        (np.ones(index.size), (index, np.arange(index.size))), shape=(n_rows, index.size)
    )
    return S @ values


class WSCLayer:
    """One graph convolution.

    For every vertex and every scale t in 2..T, the walk field is encoded
    into mixture-gradient features, mapped by a per-scale affine ``g_t``,
    concatenated with the vertex's own attributes and fused by ``f``,
    followed by a rectifier. Adjacency is left untouched.

    ``normalize`` controls how each per-scale feature vector is conditioned
    before ``g_t``: ``"power"`` applies a smooth signed square root followed
    by unit L2 norm, ``"l2"`` only the latter, ``None`` leaves it raw. Raw
    features grow polynomially with depth and momentum SGD diverges.
    """

    def __init__(self, name, in_features, out_features, T=3, C=3, K=8, rng=None, hidden=None,
                 normalize="power"):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.T, self.C, self.K = T, C, K
        self.hidden = out_features if hidden is None else hidden
        self.scales = walk_scales(T)
        if normalize not in ("power", "l2", None):
            raise ValueError(f"unknown feature normalization {normalize!r}")
        self.normalize = normalize
        self.gmm = {}
        self.g = {}
        for t in self.scales:
            q = t * in_features
            self.gmm[t] = (
                Parameter(f"{name}.t{t}.alpha", np.zeros(C)),
                Parameter(f"{name}.t{t}.mu", rng.normal(0.0, 0.1, size=(C, q))),
                Parameter(f"{name}.t{t}.rho", np.zeros((C, q))),
            )
            self.g[t] = Linear(f"{name}.g{t}", feature_size(t, in_features, C), self.hidden, rng)
        self.f = Linear(f"{name}.f", in_features + len(self.scales) * self.hidden, out_features, rng)
        self.relu = ReLU()
        self._cache = None

    @property
    def parameters(self):
        params = []
        for t in self.scales:
            params.extend(self.gmm[t])
            params.extend(self.g[t].parameters)
        params.extend(self.f.parameters)
        return params

    def forward(self, X, fields):
        """``fields[t]`` holds integer paths of shape (N, K, t + 1)."""
        missing = [t for t in self.scales if t not in fields]
        if missing:
            raise UsageError(f"{self.name}: walk fields missing for scales {missing}")
        parts = [X]
        encoders, norms = {}, {}
        for t in self.scales:
            alpha, mu, rho = (p.value for p in self.gmm[t])
            enc = MixtureEncoder(alpha, mu, rho)
            F = enc.forward(path_attributes(X, fields[t]))
            if self.normalize:
                root = None
                if self.normalize == "power":
                    F, root = signed_sqrt(F)
                F, norm = l2_normalize(F)
                norms[t] = (F, norm, root)
            parts.append(self.g[t].forward(F))
            encoders[t] = enc
        out = self.relu.forward(self.f.forward(np.concatenate(parts, axis=1)))
        self._cache = (X.shape, fields, encoders, norms)
        return out

    def backward(self, upstream):
        if self._cache is None:
            raise UsageError(f"{self.name}: backward called before forward")
        (N, d), fields, encoders, norms = self._cache
        if upstream.shape != (N, self.out_features):
            raise UsageError(f"{self.name}: upstream shape {upstream.shape} does not match cache")
        dH = self.f.backward(self.relu.backward(upstream))
        dX = dH[:, :d].copy()
        offset = d
        for t in self.scales:
            dF = self.g[t].backward(dH[:, offset:offset + self.hidden])
            offset += self.hidden
            if self.normalize:
                Fn, norm, root = norms[t]
                dF = l2_normalize_backward(Fn, norm, dF)
                if root is not None:
                    dF = signed_sqrt_backward(root, dF)
            d_alpha, d_mu, d_rho, d_xp = encoders[t].backward(dF)
            alpha, mu, rho = self.gmm[t]
            alpha.grad += d_alpha
            mu.grad += d_mu
            rho.grad += d_rho
            idx = fields[t][:, :, 1:].ravel()
            dX += scatter_rows(idx, d_xp.reshape(-1, d), N)
        return dX
