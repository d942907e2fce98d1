"""The eight automatic variational guides, synthesized from a model alone.

Every guide owns a flat parameter vector theta and exposes:

* ``transport(theta, eps)`` -- deterministic, differentiable in theta given
  the exogenous noise (the reparameterization trick); returns ``(u, log_q)``
  where ``log_q`` is the guide density at the returned point,
* ``sample(theta, rng)`` -- draws the noise and calls ``transport``,
* ``log_density(theta, u)`` -- independent density evaluation (closed form
  for the Gaussian family; numeric inverse for flows up to dimension 3).

``log_q`` is computed as ``log N(eps) - log|det J|`` of the transport, which
equals the density at the transported point for every bijective family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy import optimize as sopt
from scipy import special as _sp

from . import autodiff as ad
from .autodiff import Var, asvalue
from .distributions import standard_normal
from .errors import HessianNotPD, NonConvergence, UnsupportedDimension
from .model import GenerativeModel, PreparedModel

GUIDE_KINDS = (
    "delta", "normal", "diagonal-normal", "multivariate-normal",
    "low-rank", "laplace", "iaf", "bnaf",
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GuideConfig:
    """Guide hyperparameters; d-dependent defaults resolve at synthesis."""

    init_scale: float = 0.1
    init_loc_jitter: float = 0.0
    rank: Optional[int] = None                 # default max(1, d // 2)
    iaf_num_flows: int = 3
    iaf_hidden: Optional[tuple] = None         # default (2d, 2d)
    iaf_gate_bias: float = 1.0
    bnaf_num_flows: int = 1
    bnaf_block_factors: tuple = (8, 8)
    init_seed: int = 0

    def __post_init__(self):
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.init_loc_jitter < 0:
            raise ValueError("init_loc_jitter must be nonnegative")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be positive")
        if not self.bnaf_block_factors:
            raise ValueError("bnaf_block_factors must be non-empty")
        if self.iaf_hidden is not None and not tuple(self.iaf_hidden):
            raise ValueError("iaf_hidden must be non-empty")


def _log_normal_base(eps):
    """log N(eps | 0, I) for a constant noise vector (batched over rows)."""
    e = np.asarray(asvalue(eps), dtype=np.float64)
    return -0.5 * (e.shape[-1] * LOG_2PI + np.sum(e * e, axis=-1))


def _sum_last(x):
    if isinstance(x, Var):
        return ad.vsum(x)
    return np.sum(x, axis=-1)


class Guide:
    """Base class; concrete guides fill in transport/log_density."""

    kind = "?"

    def __init__(self, d: int, config: GuideConfig):
        if d < 1:
            raise UnsupportedDimension("guides need at least one latent dimension")
        self.d = d
        self.config = config
        self.noise_dim = d

    @property
    def theta_len(self):
        return self.init_theta().size

    def init_theta(self) -> np.ndarray:
        raise NotImplementedError

    def transport(self, theta, eps):
        raise NotImplementedError

    def sample(self, theta, rng):
        """Draw noise and transport it; returns (u, log_q)."""
        eps = standard_normal(rng, self.noise_dim) if self.noise_dim else np.zeros(0)
        return self.transport(theta, eps)

    def sample_batch(self, theta, rng, n):
        """n posterior draws in plain-value mode; returns (U[n,d], log_q[n])."""
        eps = standard_normal(rng, (n, self.noise_dim)) if self.noise_dim \
            else np.zeros((n, 0))
        return self.transport(np.asarray(theta, dtype=np.float64), eps)

    def log_density(self, theta, u):
        raise NotImplementedError

    def _jittered_loc(self):
        loc = np.zeros(self.d)
        if self.config.init_loc_jitter > 0.0:
            rng = np.random.default_rng(self.config.init_seed)
            loc += self.config.init_loc_jitter * (2.0 * rng.random(self.d) - 1.0)
        return loc


class DeltaGuide(Guide):
    """Point mass; log_q is 0 by convention so the ELBO is the log-joint."""

    kind = "delta"

    def __init__(self, d, config):
        super().__init__(d, config)
        self.noise_dim = 0

    def init_theta(self):
        return self._jittered_loc()

    def transport(self, theta, eps):
        e = np.asarray(asvalue(eps))
        if e.ndim == 2:  # batch mode: replicate the point
            n = e.shape[0]
            return np.broadcast_to(np.asarray(theta), (n, self.d)).copy(), np.zeros(n)
        return theta, 0.0

    def log_density(self, theta, u):
        same = np.allclose(np.asarray(theta), np.asarray(u), rtol=0.0, atol=1e-12)
        return 0.0 if same else -math.inf


class _GaussianSiteGuide(Guide):
    """Shared math of the mean-field guides; subclasses fix the theta layout."""

    def __init__(self, d, config, loc_idx, rho_idx):
        super().__init__(d, config)
        self._loc_idx = loc_idx
        self._rho_idx = rho_idx

    def init_theta(self):
        theta = np.empty(2 * self.d)
        theta[self._loc_idx] = self._jittered_loc()
        theta[self._rho_idx] = math.log(self.config.init_scale)
        return theta

    def transport(self, theta, eps):
        loc = theta[self._loc_idx]
        rho = theta[self._rho_idx]
        u = loc + ad.exp(rho) * eps
        log_q = _log_normal_base(eps) - _sum_last(rho)
        return u, log_q

    def log_density(self, theta, u):
        theta = np.asarray(theta, dtype=np.float64)
        loc = theta[self._loc_idx]
        sd = np.exp(theta[self._rho_idx])
        z = (np.asarray(u) - loc) / sd
        return float(np.sum(-0.5 * LOG_2PI - np.log(sd) - 0.5 * z * z))


class DiagonalNormalGuide(_GaussianSiteGuide):
    """One joint location vector and one joint scale vector."""

    kind = "diagonal-normal"

    def __init__(self, d, config, sites=None):
        super().__init__(d, config, np.arange(d), d + np.arange(d))


class NormalGuide(_GaussianSiteGuide):
    """Identical density to diagonal-normal; theta grouped per model site."""

    kind = "normal"

    def __init__(self, d, config, sites=None):
        sites = sites or [("z", 0, d)]
        loc_idx = np.empty(d, dtype=np.int64)
        rho_idx = np.empty(d, dtype=np.int64)
        pos = 0
        for _, offset, length in sites:
            loc_idx[offset:offset + length] = pos + np.arange(length)
            pos += length
            rho_idx[offset:offset + length] = pos + np.arange(length)
            pos += length
        super().__init__(d, config, loc_idx, rho_idx)


class MultivariateNormalGuide(Guide):
    """Full-rank Gaussian via an unconstrained Cholesky factor."""

    kind = "multivariate-normal"

    def __init__(self, d, config):
        super().__init__(d, config)
        self._tril = np.tril_indices(d, k=-1)

    def init_theta(self):
        n_off = self.d * (self.d - 1) // 2
        return np.concatenate([
            self._jittered_loc(),
            np.full(self.d, math.log(self.config.init_scale)),
            np.zeros(n_off),
        ])

    def _factor(self, theta):
        d = self.d
        log_diag = theta[d:2 * d]
        off = theta[2 * d:]
        L = ad.index_update(np.zeros((d, d)), (np.arange(d), np.arange(d)),
                            ad.exp(log_diag))
        if d > 1:
            L = ad.index_update(L, self._tril, off)
        return L, log_diag

    def transport(self, theta, eps):
        d = self.d
        loc = theta[:d]
        L, log_diag = self._factor(theta)
        e = np.asarray(asvalue(eps))
        if not isinstance(eps, Var) and not isinstance(theta, Var) and e.ndim == 2:
            u = loc + e @ asvalue(L).T
            lq = _log_normal_base(eps) - np.sum(asvalue(log_diag))
            return u, lq
        u = loc + ad.matmul(L, eps)
        log_q = _log_normal_base(eps) - ad.vsum(log_diag)
        return u, log_q

    def log_density(self, theta, u):
        d = self.d
        theta = np.asarray(theta, dtype=np.float64)
        loc = theta[:d]
        L = np.zeros((d, d))
        L[np.arange(d), np.arange(d)] = np.exp(theta[d:2 * d])
        L[self._tril] = theta[2 * d:]
        z = sla.solve_triangular(L, np.asarray(u) - loc, lower=True)
        return float(-0.5 * d * LOG_2PI - np.sum(theta[d:2 * d]) - 0.5 * z @ z)


class LowRankGuide(Guide):
    """Covariance D + W Wᵀ; density through the Woodbury/determinant lemmas."""

    kind = "low-rank"

    def __init__(self, d, config):
        super().__init__(d, config)
        self.rank = config.rank if config.rank is not None else max(1, d // 2)
        self.noise_dim = self.rank + d

    def init_theta(self):
        return np.concatenate([
            self._jittered_loc(),
            np.full(self.d, math.log(self.config.init_scale)),
            np.zeros(self.d * self.rank),
        ])

    def _unpack(self, theta):
        d, r = self.d, self.rank
        loc = theta[:d]
        log_sd = theta[d:2 * d]
        W = ad.reshape(theta[2 * d:], (d, r))
        return loc, log_sd, W

    def transport(self, theta, eps):
        d, r = self.d, self.rank
        loc, log_sd, W = self._unpack(theta)
        e = np.asarray(asvalue(eps))
        batch = not isinstance(eps, Var) and not isinstance(theta, Var) and e.ndim == 2
        e1 = eps[..., :r] if batch else eps[:r]
        e2 = eps[..., r:] if batch else eps[r:]
        sd = ad.exp(log_sd)
        if batch:
            u = loc + e1 @ asvalue(W).T + e2 * asvalue(sd)
        else:
            u = loc + ad.matmul(W, e1) + sd * e2
        log_q = self._woodbury_log_density(loc, log_sd, W, u)
        return u, log_q

    def _woodbury_log_density(self, loc, log_sd, W, u):
        d, r = self.d, self.rank
        delta = u - loc
        dinv = ad.exp(-2.0 * log_sd)                      # 1/D
        if np.ndim(asvalue(u)) == 2:                      # batched plain values
            Wv, dv = asvalue(W), asvalue(dinv)
            A = np.eye(r) + (Wv * dv[:, None]).T @ Wv
            s, logdet_a = np.linalg.slogdet(A)
            t = asvalue(delta) * dv
            b = t @ Wv
            sol = np.linalg.solve(A, b.T).T
            quad = np.sum(asvalue(delta) * t, axis=-1) - np.sum(b * sol, axis=-1)
            logdet = np.sum(2.0 * asvalue(log_sd)) + logdet_a
            return -0.5 * (d * LOG_2PI + logdet + quad)
        WtD = W * ad.reshape(dinv, (d, 1))                 # D^{-1} W, columnwise
        A = np.eye(r) + ad.matmul(_transpose(W), WtD)      # I + Wᵀ D⁻¹ W
        Lchol = _cholesky_scalar(A, r)
        logdet_a = 0.0
        for i in range(r):
            logdet_a = logdet_a + 2.0 * ad.log(Lchol[i][i])
        b = ad.matmul(_transpose(WtD), delta)              # Wᵀ D⁻¹ δ
        sol = _cholesky_solve(Lchol, b, r)
        quad = ad.vsum(delta * dinv * delta) - ad.dot(b, sol)
        logdet = 2.0 * ad.vsum(log_sd) + logdet_a
        return -0.5 * (d * LOG_2PI + logdet + quad)

    def log_density(self, theta, u):
        """Dense-covariance evaluation (independent of the Woodbury path)."""
        theta = np.asarray(theta, dtype=np.float64)
        d, r = self.d, self.rank
        loc = theta[:d]
        D = np.diag(np.exp(2.0 * theta[d:2 * d]))
        W = theta[2 * d:].reshape(d, r)
        cov = D + W @ W.T
        s, logdet = np.linalg.slogdet(cov)
        delta = np.asarray(u) - loc
        quad = delta @ np.linalg.solve(cov, delta)
        return float(-0.5 * (d * LOG_2PI + logdet + quad))


def _transpose(x):
    if isinstance(x, Var):
        shape = x.value.shape
        perm = np.arange(x.value.size).reshape(shape).T.reshape(-1)
        flat = ad.reshape(x, (-1,))
        return ad.reshape(flat[perm], (shape[1], shape[0]))
    return np.asarray(x).T


def _cholesky_scalar(A, r):
    """Scalar-loop Cholesky of a small SPD matrix on the tape."""
    L = [[None] * r for _ in range(r)]
    for i in range(r):
        for j in range(i + 1):
            s = A[i, j]
            for k in range(j):
                s = s - L[i][k] * L[j][k]
            if i == j:
                L[i][j] = ad.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    return L


def _cholesky_solve(L, b, r):
    """Solve (L Lᵀ) x = b by substitution over tape scalars."""
    y = [None] * r
    for i in range(r):
        s = b[i]
        for k in range(i):
            s = s - L[i][k] * y[k]
        y[i] = s / L[i][i]
    x = [None] * r
    for i in reversed(range(r)):
        s = y[i]
        for k in range(i + 1, r):
            s = s - L[k][i] * x[k]
        x[i] = s / L[i][i]
    return ad.stack(x)


class LaplaceGuide(Guide):
    """MAP search as a point mass, then a Gaussian at the MAP with
    covariance (-H)^-1 from the finite-difference Hessian."""

    kind = "laplace"

    def __init__(self, d, config):
        super().__init__(d, config)
        self.noise_dim = 0
        self.finalized = False
        self.loc = None
        self.scale_tril = None

    def init_theta(self):
        return self._jittered_loc()

    def transport(self, theta, eps):
        if not self.finalized:
            return DeltaGuide.transport(self, theta, eps)
        e = np.asarray(asvalue(eps))
        L = self.scale_tril
        if e.ndim == 2:
            u = self.loc + e @ L.T
        else:
            u = self.loc + L @ e
        log_q = _log_normal_base(eps) - np.sum(np.log(np.diag(L)))
        return u, log_q

    def finalize(self, prepared: PreparedModel, theta_map):
        theta_map = np.asarray(theta_map, dtype=np.float64)
        # curvature of the branch taken at the MAP: finite differences of the
        # raw log-joint would mix branches when the MAP sits on a kink
        H = ad.hessian(prepared.branch_frozen_log_joint(theta_map), theta_map)
        neg_h = -H
        base = 1e-8 * (1.0 + np.max(np.abs(np.diag(H))))
        jitter = 0.0
        for attempt in range(9):
            try:
                np.linalg.cholesky(neg_h + jitter * np.eye(self.d))
                break
            except np.linalg.LinAlgError:
                jitter = base if jitter == 0.0 else 2.0 * jitter
        else:
            raise HessianNotPD(
                "negative Hessian at the MAP not positive definite after jitter")
        cov = np.linalg.inv(neg_h + jitter * np.eye(self.d))
        cov = 0.5 * (cov + cov.T)
        try:
            self.scale_tril = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as ex:
            raise HessianNotPD(f"covariance factorization failed: {ex}") from ex
        self.loc = theta_map
        self.finalized = True
        self.noise_dim = self.d
        return self

    def log_density(self, theta, u):
        if not self.finalized:
            return DeltaGuide.log_density(self, theta, u)
        z = sla.solve_triangular(self.scale_tril, np.asarray(u) - self.loc, lower=True)
        return float(-0.5 * self.d * LOG_2PI
                     - np.sum(np.log(np.diag(self.scale_tril))) - 0.5 * z @ z)


# -- normalizing flows -------------------------------------------------------------

def _made_masks(d, hidden, rng):
    """MADE degree assignment and masks for strictly autoregressive outputs."""
    deg_in = np.arange(1, d + 1)
    degrees = [deg_in]
    span = max(1, d - 1)
    for h in hidden:
        degrees.append((np.arange(h) % span) + 1)
    masks = []
    for prev, cur in zip(degrees[:-1], degrees[1:]):
        masks.append((cur[:, None] >= prev[None, :]).astype(np.float64))
    out_deg = np.concatenate([deg_in, deg_in])  # two heads: shift m, log-gate s
    masks.append((out_deg[:, None] > degrees[-1][None, :]).astype(np.float64))
    return masks


class IAFGuide(Guide):
    """Stacked inverse autoregressive flows over a standard normal base."""

    kind = "iaf"

    def __init__(self, d, config):
        super().__init__(d, config)
        self.num_flows = config.iaf_num_flows
        self.hidden = tuple(config.iaf_hidden) if config.iaf_hidden is not None \
            else (2 * d, 2 * d)
        self.gate_bias = config.iaf_gate_bias
        rng = np.random.default_rng(config.init_seed)
        self.masks = _made_masks(d, self.hidden, rng)
        self._build_slices()
        self._theta0 = self._init_weights(rng)

    def _build_slices(self):
        sizes = [self.d] + list(self.hidden) + [2 * self.d]
        self.layer_shapes = [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]
        self.slices = []
        pos = 0
        for _ in range(self.num_flows):
            flow = []
            for (out, inp) in self.layer_shapes:
                w = slice(pos, pos + out * inp)
                pos += out * inp
                b = slice(pos, pos + out)
                pos += out
                flow.append((w, b))
            self.slices.append(flow)
        self._theta_len = pos

    def _init_weights(self, rng):
        theta = np.zeros(self._theta_len)
        for flow in self.slices:
            for li, (wsl, _) in enumerate(flow):
                out, inp = self.layer_shapes[li]
                if li == len(flow) - 1:
                    continue  # output layer starts at zero: identity-like flow
                a = 1.0 / math.sqrt(inp)
                theta[wsl] = (rng.random(out * inp) * 2.0 - 1.0) * a
        return theta

    def init_theta(self):
        return self._theta0.copy()

    def _made(self, theta, flow_slices, x):
        h = x
        last = len(flow_slices) - 1
        for li, (wsl, bsl) in enumerate(flow_slices):
            out, inp = self.layer_shapes[li]
            W = ad.reshape(theta[wsl], (out, inp)) * self.masks[li]
            b = theta[bsl]
            pre = _linear(W, h) + b
            h = ad.tanh(pre) if li != last else pre
        return h

    def transport(self, theta, eps):
        d = self.d
        x = eps
        ladj = 0.0
        for f in range(self.num_flows):
            if f > 0:
                x = _rev(x)
            out = self._made(theta, self.slices[f], x)
            m = _take(out, slice(0, d))
            s = _take(out, slice(d, 2 * d))
            gate = ad.sigmoid(s + self.gate_bias)
            x = x * gate + m * (1.0 - gate)
            ladj = ladj + _sum_last(ad.log(gate))
        return x, _log_normal_base(eps) - ladj

    def inverse(self, theta, u):
        """Sequential exact inverse of the whole stack (value mode)."""
        if self.d > 16:
            raise UnsupportedDimension("iaf inverse limited to d <= 16")
        theta = np.asarray(theta, dtype=np.float64)
        x = np.asarray(u, dtype=np.float64).copy()
        for f in reversed(range(self.num_flows)):
            y = x
            x = np.zeros(self.d)
            for i in range(self.d):
                out = self._made(theta, self.slices[f], x)
                m = out[:self.d]
                gate = _sp.expit(out[self.d:] + self.gate_bias)
                if gate[i] <= 0.0:
                    raise NonConvergence("gate collapsed to zero during inversion")
                x[i] = (y[i] - m[i] * (1.0 - gate[i])) / gate[i]
            if f > 0:
                x = x[::-1]
        return x

    def log_density(self, theta, u):
        return _flow_log_density(self, theta, u)


class BNAFGuide(Guide):
    """Block neural autoregressive flow: block-lower-triangular layers with
    exp-reparameterized diagonal blocks and tanh activations; the diagonal
    Jacobian entries are accumulated through the blocks in log space."""

    kind = "bnaf"

    def __init__(self, d, config):
        super().__init__(d, config)
        self.num_flows = config.bnaf_num_flows
        self.factors = tuple(config.bnaf_block_factors)
        self.widths = (1,) + self.factors + (1,)   # per-coordinate block widths
        rng = np.random.default_rng(config.init_seed)
        self._build(rng)

    def _build(self, rng):
        d = self.d
        self.layer_dims = [(d * self.widths[i + 1], d * self.widths[i])
                           for i in range(len(self.widths) - 1)]
        self.offdiag_masks = []
        for li, (out, inp) in enumerate(self.layer_dims):
            wo, wi = self.widths[li + 1], self.widths[li]
            mask = np.zeros((out, inp))
            for ci in range(d):      # block row
                for cj in range(ci):  # strictly lower block columns
                    mask[ci * wo:(ci + 1) * wo, cj * wi:(cj + 1) * wi] = 1.0
            self.offdiag_masks.append(mask)
        # theta layout per flow/layer: diag block logs, off-diag weights, bias
        self.slices = []
        pos = 0
        for _ in range(self.num_flows):
            flow = []
            for li, (out, inp) in enumerate(self.layer_dims):
                wo, wi = self.widths[li + 1], self.widths[li]
                dg = slice(pos, pos + d * wo * wi)
                pos += d * wo * wi
                od = slice(pos, pos + out * inp)
                pos += out * inp
                b = slice(pos, pos + out)
                pos += out
                flow.append((dg, od, b))
            self.slices.append(flow)
        self._theta_len = pos
        self._theta0 = self._init_weights(rng)

    def _init_weights(self, rng):
        d = self.d
        theta = np.zeros(self._theta_len)
        n_layers = len(self.layer_dims)
        inner = float(np.prod(self.factors))
        c = (self.config.init_scale / inner) ** (1.0 / n_layers)
        for flow in self.slices:
            for li, (dg, od, _) in enumerate(flow):
                wo, wi = self.widths[li + 1], self.widths[li]
                theta[dg] = math.log(c) + 0.1 * (rng.random(d * wo * wi) * 2.0 - 1.0)
                out, inp = self.layer_dims[li]
                a = 0.01 / math.sqrt(max(1, inp))
                theta[od] = (rng.random(out * inp) * 2.0 - 1.0) * a
        return theta

    def init_theta(self):
        return self._theta0.copy()

    def transport(self, theta, eps):
        d = self.d
        x = eps
        total_ladj = None
        for f in range(self.num_flows):
            if f > 0:
                x = _rev(x)
            x, ladj = self._flow(theta, self.slices[f], x)
            total_ladj = ladj if total_ladj is None else total_ladj + ladj
        return x, _log_normal_base(eps) - total_ladj

    def _flow(self, theta, flow_slices, x):
        d = self.d
        h = x
        logj = None
        last = len(flow_slices) - 1
        for li, (dg, od, bs) in enumerate(flow_slices):
            wo, wi = self.widths[li + 1], self.widths[li]
            out, inp = self.layer_dims[li]
            diag_log = ad.reshape(theta[dg], (d, wo, wi))
            Woff = ad.reshape(theta[od], (out, inp)) * self.offdiag_masks[li]
            b = theta[bs]
            hb = _block_reshape(h, d, wi)
            pre = _linear(Woff, h) + _block_flatten(_bmm(ad.exp(diag_log), hb), d, wo) + b
            if li != last:
                h = ad.tanh(pre)
                # log tanh'(pre) = 2 log 2 - 2 pre - 2 softplus(-2 pre)
                dt = 2.0 * math.log(2.0) - 2.0 * pre - 2.0 * ad.softplus(-2.0 * pre)
                layer_logj = diag_log + _expand_cols(_block_reshape(dt, d, wo))
            else:
                h = pre
                layer_logj = diag_log
            logj = layer_logj if logj is None else _logmatmul(layer_logj, logj)
        ladj = _sum_last(_squeeze_blocks(logj, d))
        return h, ladj

    def log_density(self, theta, u):
        return _flow_log_density(self, theta, u)


# -- shape helpers shared by the flows (value mode supports a batch axis) -----------

def _linear(W, h):
    if isinstance(h, Var) or isinstance(W, Var) or np.asarray(h).ndim == 1:
        return ad.matmul(W, h)
    return h @ np.asarray(W).T


def _rev(x):
    if isinstance(x, Var):
        return x[slice(None, None, -1)]
    return np.asarray(x)[..., ::-1]


def _take(x, sl):
    if isinstance(x, Var):
        return x[sl]
    return np.asarray(x)[..., sl]


def _block_reshape(h, d, w):
    if isinstance(h, Var):
        return ad.reshape(h, (d, w))
    arr = np.asarray(h)
    return arr.reshape(arr.shape[:-1] + (d, w))


def _block_flatten(hb, d, w):
    if isinstance(hb, Var):
        return ad.reshape(hb, (d * w,))
    arr = np.asarray(hb)
    return arr.reshape(arr.shape[:-2] + (d * w,))


def _bmm(A, h):
    if isinstance(A, Var) or isinstance(h, Var):
        return ad.bmm(A, h)
    return np.einsum("dpq,...dq->...dp", np.asarray(A), np.asarray(h))


def _expand_cols(x):
    """(.., d, w) -> (.., d, w, 1) so it broadcasts over block columns."""
    if isinstance(x, Var):
        return ad.reshape(x, x.value.shape + (1,))
    arr = np.asarray(x)
    return arr.reshape(arr.shape + (1,))


def _logmatmul(A, B):
    """Blockwise log-space matrix product: logsumexp over the inner index."""
    if isinstance(A, Var) or isinstance(B, Var):
        am = ad.reshape(A, A.value.shape + (1,)) if isinstance(A, Var) \
            else np.asarray(A)[..., None]
        bshape = asvalue(B).shape  # (d, k, n) -> (d, 1, k, n)
        bm = ad.reshape(B, (bshape[0], 1) + bshape[1:]) if isinstance(B, Var) \
            else np.asarray(B)[:, None, :, :]
        return ad.logsumexp(am + bm, axis=-2)
    A = np.asarray(A)
    B = np.asarray(B)
    stacked = A[..., :, :, None] + np.expand_dims(B, -3)
    return _sp.logsumexp(stacked, axis=-2)


def _squeeze_blocks(logj, d):
    """(.., d, 1, 1) -> (.., d)."""
    if isinstance(logj, Var):
        return ad.reshape(logj, (d,))
    arr = np.asarray(logj)
    return arr.reshape(arr.shape[:-2])


def _flow_log_density(guide, theta, u):
    """Numeric change-of-variables density for flows, d <= 3 only."""
    d = guide.d
    if d > 3:
        raise UnsupportedDimension("flow density evaluation limited to d <= 3")
    theta = np.asarray(theta, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    eps = _flow_inverse_numeric(guide, theta, u)
    J = np.empty((d, d))
    h = 1e-6
    for j in range(d):
        ep = eps.copy()
        em = eps.copy()
        ep[j] += h
        em[j] -= h
        up, _ = guide.transport(theta, ep)
        um, _ = guide.transport(theta, em)
        J[:, j] = (np.asarray(up) - np.asarray(um)) / (2.0 * h)
    sign, logdet = np.linalg.slogdet(J)
    return float(_log_normal_base(eps) - logdet)


def _flow_inverse_numeric(guide, theta, u):
    """Coordinate-wise bracketing inverse; valid for autoregressive flows."""
    if isinstance(guide, IAFGuide):
        return guide.inverse(theta, u)
    d = guide.d
    eps = np.zeros(d)
    for i in range(d):
        def fi(t, i=i):
            e = eps.copy()
            e[i] = t
            out, _ = guide.transport(theta, e)
            return float(np.asarray(out)[i]) - float(u[i])
        lo, hi = -1.0, 1.0
        for _ in range(200):
            if fi(lo) < 0.0:
                break
            lo *= 2.0
        else:
            raise NonConvergence("could not bracket the flow inverse (low side)")
        for _ in range(200):
            if fi(hi) > 0.0:
                break
            hi *= 2.0
        else:
            raise NonConvergence("could not bracket the flow inverse (high side)")
        eps[i] = sopt.brentq(fi, lo, hi, xtol=1e-12)
    return eps


# -- synthesis and the module-level operation surface --------------------------------

_GUIDE_CLASSES = {
    "delta": DeltaGuide,
    "normal": NormalGuide,
    "diagonal-normal": DiagonalNormalGuide,
    "multivariate-normal": MultivariateNormalGuide,
    "low-rank": LowRankGuide,
    "laplace": LaplaceGuide,
    "iaf": IAFGuide,
    "bnaf": BNAFGuide,
}


def synthesize(kind: str, model, config: GuideConfig | None = None, data=None) -> Guide:
    """Build a guide of ``kind`` sized for ``model`` (GenerativeModel or
    PreparedModel); ``data`` is needed when parameter sizes depend on it."""
    config = config or GuideConfig()
    if kind not in _GUIDE_CLASSES:
        raise ValueError(f"unknown guide kind {kind!r}; choose from {GUIDE_KINDS}")
    prepared = model if isinstance(model, PreparedModel) else model.prepare(data)
    d = prepared.layout.dim
    if d == 0:
        raise UnsupportedDimension("model has no parameters")
    if kind == "normal":
        sites = [(e.name, e.offset, e.length) for e in prepared.layout.entries]
        return NormalGuide(d, config, sites)
    return _GUIDE_CLASSES[kind](d, config)


def guide_sample(g: Guide, theta, rng):
    return g.sample(theta, rng)


def guide_log_density(g: Guide, theta, u):
    return g.log_density(theta, u)


def laplace_finalize(g: LaplaceGuide, model, data, theta_map) -> LaplaceGuide:
    prepared = model if isinstance(model, PreparedModel) else model.prepare(data)
    return g.finalize(prepared, theta_map)


def iaf_inverse(g: IAFGuide, theta, u):
    return g.inverse(theta, u)
