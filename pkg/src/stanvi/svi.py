"""Stochastic variational inference: Monte-Carlo ELBO, Adam, fixed-step
training and posterior sampling in constrained space.

The training protocol is deliberately fixed-step (no convergence detection or
adaptive schedules): ``run`` performs exactly ``num_steps`` Adam updates and
then draws ``num_samples`` guide samples.  A NaN (or infinite) ELBO estimate
or gradient is not an exception but a result status, recorded with the step
at which it first appeared.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import asvalue
from .errors import NaNDetected
from .guides import Guide, LaplaceGuide
from .model import GenerativeModel, PreparedModel
from .samples import SampleTable, flat_names, flatten_value

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class SVIConfig:
    num_steps: int = 100_000
    num_samples: int = 10_000
    step_size: float = 5e-4
    num_particles: int = 1
    seed: int = 0


@dataclass
class SVIState:
    step: int
    theta: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    loss_trace: list = field(default_factory=list)  # (step, -elbo estimate)
    rng: Optional[np.random.Generator] = None

    @staticmethod
    def init(theta, rng=None):
        theta = np.asarray(theta, dtype=np.float64)
        return SVIState(0, theta, np.zeros_like(theta), np.zeros_like(theta),
                        [], rng)


@dataclass
class SVIResult:
    theta: np.ndarray
    loss_trace: list
    samples: Optional[SampleTable]
    status: str                     # "ok" | "nan_error"
    nan_step: Optional[int] = None

    @property
    def ok(self):
        return self.status == "ok"


def _elbo_fn(prepared: PreparedModel, guide: Guide, eps_list):
    def f(theta):
        total = 0.0
        for eps in eps_list:
            u, log_q = guide.transport(theta, eps)
            lp = prepared.log_joint(u)
            total = total + (lp - log_q)
        return total / len(eps_list)
    return f


def elbo(m, g: Guide, data, theta, rng, num_particles=1):
    """One Monte-Carlo ELBO estimate and its reparameterization gradient.

    Raises :class:`NaNDetected` when the estimate or gradient contains NaN.
    """
    prepared = m if isinstance(m, PreparedModel) else m.prepare(data)
    eps_list = [guide_noise(g, rng) for _ in range(num_particles)]
    val, grad = ad.value_and_grad(_elbo_fn(prepared, g, eps_list),
                                  np.asarray(theta, dtype=np.float64))
    if np.isnan(val) or np.isnan(grad).any():
        raise NaNDetected("NaN in ELBO estimate or gradient")
    return val, grad


def guide_noise(g: Guide, rng):
    from .distributions import standard_normal

    return standard_normal(rng, g.noise_dim) if g.noise_dim else np.zeros(0)


def adam_step(state: SVIState, gradient, step_size=5e-4) -> SVIState:
    """One Adam ascent step on the ELBO (bias-corrected moments)."""
    g = np.asarray(gradient, dtype=np.float64)
    t = state.step + 1
    m = ADAM_BETA1 * state.adam_m + (1.0 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.adam_v + (1.0 - ADAM_BETA2) * g * g
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    theta = state.theta + step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return replace(state, step=t, theta=theta, adam_m=m, adam_v=v)


def _optimize(prepared, guide, config: SVIConfig, rng, num_steps):
    """Fixed-step Adam loop; returns (state, nan_step or None)."""
    state = SVIState.init(guide.init_theta(), rng)
    interval = max(1, num_steps // 1000)
    for step in range(num_steps):
        eps_list = [guide_noise(guide, rng) for _ in range(config.num_particles)]
        val, grad = ad.value_and_grad(_elbo_fn(prepared, guide, eps_list),
                                      state.theta)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return state, step
        if step % interval == 0 or step == num_steps - 1:
            state.loss_trace.append((step, -val))
        state = adam_step(state, grad, config.step_size)
    return state, None


def run(m, g: Guide, data, config: SVIConfig = SVIConfig()) -> SVIResult:
    """num_steps optimization steps, then num_samples posterior draws.

    Laplace guides run their MAP phase on the same step budget, are finalized
    from the Hessian at the optimum, and draw from the resulting Gaussian.
    """
    prepared = m if isinstance(m, PreparedModel) else m.prepare(data)
    rng = np.random.default_rng(config.seed)
    state, nan_step = _optimize(prepared, g, config, rng, config.num_steps)
    if nan_step is not None:
        return SVIResult(state.theta, state.loss_trace, None, "nan_error", nan_step)
    if isinstance(g, LaplaceGuide) and not g.finalized:
        try:
            g.finalize(prepared, state.theta)
        except Exception:
            return SVIResult(state.theta, state.loss_trace, None, "nan_error",
                             config.num_steps)
    try:
        table = draw_posterior(prepared, g, state.theta, config.num_samples, rng,
                               seed=config.seed)
    except NaNDetected:
        return SVIResult(state.theta, state.loss_trace, None, "nan_error",
                         config.num_steps)
    if table.has_nan():
        return SVIResult(state.theta, state.loss_trace, None, "nan_error",
                         config.num_steps)
    return SVIResult(state.theta, state.loss_trace, table, "ok")


def draw_posterior(m, g: Guide, theta, n, rng, data=None, seed=None) -> SampleTable:
    """n guide draws mapped to constrained space, plus generated quantities."""
    prepared = m if isinstance(m, PreparedModel) else m.prepare(data)
    theta = np.asarray(theta, dtype=np.float64)
    U, _ = g.sample_batch(theta, rng, n)
    U = np.asarray(U, dtype=np.float64)
    if np.isnan(U).any():
        raise NaNDetected("NaN in posterior draws")
    return constrain_table(prepared, U, rng, seed=seed)


def constrain_table(prepared: PreparedModel, U, rng, seed=None) -> SampleTable:
    """Map unconstrained draws (n, d) to a constrained SampleTable."""
    n = U.shape[0]
    layout = prepared.layout
    model = prepared.model
    # vectorize elementwise transforms; stick-breaking/ordered go row by row
    param_cols = {}
    for e in layout.entries:
        block = U[:, e.offset:e.offset + e.length]
        if e.transform.kind in ("identity", "lower", "upper", "interval"):
            x, _ = e.transform.forward(block)
        else:
            x = np.stack([np.asarray(e.transform.forward(row)[0]) for row in block])
        param_cols[e.name] = x
    columns = []
    blocks = []
    for e in layout.entries:
        columns.extend(flat_names(e.name, e.shape))
        blocks.append(param_cols[e.name].reshape(n, -1))
    # transformed parameters and generated quantities need the interpreter
    tparam_rows = []
    gq_rows = []
    tparam_cols = None
    gq_cols = None
    has_extra = bool(model.tparam_names) or bool(model.gq_names)
    if has_extra:
        for i in range(n):
            draw = {}
            for e in layout.entries:
                v = param_cols[e.name][i]
                draw[e.name] = float(v) if not e.shape else np.asarray(v)
            constrained = dict(draw)
            if model.tparam_names:
                full = _eval_tparams(prepared, draw)
                constrained.update(full)
                vals = [flatten_value(full[nm]) for nm in model.tparam_names]
                if tparam_cols is None:
                    tparam_cols = []
                    for nm in model.tparam_names:
                        shape = np.asarray(full[nm]).shape
                        tparam_cols.extend(flat_names(nm, shape))
                tparam_rows.append(np.concatenate(vals) if vals else np.zeros(0))
            if model.gq_names:
                gq = prepared.generated_quantities(constrained, rng)
                vals = [flatten_value(gq[nm]) for nm in model.gq_names]
                if gq_cols is None:
                    gq_cols = []
                    for nm in model.gq_names:
                        shape = np.asarray(gq[nm]).shape
                        gq_cols.extend(flat_names(nm, shape))
                gq_rows.append(np.concatenate(vals) if vals else np.zeros(0))
    if tparam_cols:
        columns.extend(tparam_cols)
        blocks.append(np.stack(tparam_rows))
    if gq_cols:
        columns.extend(gq_cols)
        blocks.append(np.stack(gq_rows))
    rows = np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0))
    return SampleTable(columns, rows, seed=seed)


def _eval_tparams(prepared: PreparedModel, draw):
    env, _ctx = dict(prepared.base_env), None
    env.update(draw)
    from .model import _Ctx, _exec

    ctx = _Ctx(env, block="transformed parameters")
    for s in prepared.model.tparam_stmts:
        _exec(s, ctx)
    return {nm: env[nm] for nm in prepared.model.tparam_names}
