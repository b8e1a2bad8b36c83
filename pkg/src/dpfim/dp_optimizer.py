"""DP-SGD step machinery and the training loops.

One private step: Poisson-sample a lot, compute per-example adapter
gradients, clip each to L2 norm C, sum, add Gaussian noise with std
sigma*C per coordinate, divide by the expected lot size, and apply an
AdamW update. The non-private baseline and pre-training loops live here
too so all three share the same batching, aggregation order, and
optimizer code; with sigma=0, a huge clip norm, and sampling rate 1 the
private loop reproduces the baseline bit-for-bit.

Randomness is derived statelessly per step ("sampling.<step>",
"noise.<step>", "baseline-shuffle.<epoch>") so a run resumed from a
checkpoint replays the exact same draws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .accountant import AccountantState, steps_until_budget
from .corpus import Document, make_fim_example
from .errors import ConfigError, NumericError
from .model import (
    Batch,
    ParameterSet,
    base_keys,
    flatten_arrays,
    make_batch,
    mean_loss_base_gradients,
    per_example_gradients,
    unflatten_arrays,
)
from .seeding import rng_for

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DpConfig:
    """Clipping, noise, sampling, and AdamW hyperparameters."""

    clip_norm: float = 0.5
    noise_multiplier: float = 0.2746
    lot_size: int = 32
    learning_rate: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.noise_multiplier < 0:
            raise ConfigError(f"noise_multiplier must be >= 0, got {self.noise_multiplier}")
        if self.lot_size < 1:
            raise ConfigError(f"lot_size must be >= 1, got {self.lot_size}")

    def sampling_rate(self, n_examples: int) -> float:
        q = self.lot_size / n_examples
        if not 0.0 < q <= 1.0:
            raise ConfigError(
                f"sampling rate {q:.4g} outside (0, 1]; lot_size={self.lot_size}, N={n_examples}"
            )
        return q


@dataclass
class OptimizerState:
    """AdamW moments over one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "OptimizerState":
        return cls(m=np.zeros(dim), v=np.zeros(dim), t=0)


def clip(g: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale g to L2 norm at most clip_norm, preserving direction.

    The no-clip case multiplies by exactly 1.0, so unclipped gradients
    pass through bit-identically.
    """
    norm = float(np.linalg.norm(g))
    factor = min(1.0, clip_norm / norm) if norm > 0 else 1.0
    return g * factor


def clip_batch(G: np.ndarray, clip_norm: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise clip; returns (clipped, pre-clip norms)."""
    norms = np.linalg.norm(G, axis=1)
    with np.errstate(divide="ignore"):
        factors = np.minimum(1.0, clip_norm / np.where(norms > 0, norms, np.inf))
    return G * factors[:, None], norms


def noisy_aggregate(
    clipped: np.ndarray, clip_norm: float, noise_multiplier: float,
    lot_size: int, rng: np.random.Generator,
) -> np.ndarray:
    """(sum of clipped gradients + N(0, (sigma*C)^2 I)) / expected lot size.

    Dividing by the expected lot size (not the realized Poisson batch
    size) keeps the sensitivity of the averaged statistic at C/B, which
    the accountant assumes. An empty batch is a valid pure-noise step.
    """
    if clipped.ndim != 2:
        raise ConfigError(f"expected (batch, dim) clipped gradients, got shape {clipped.shape}")
    norms = np.linalg.norm(clipped, axis=1)
    if clipped.shape[0] and float(norms.max()) > clip_norm + 1e-9:
        raise ConfigError(
            f"aggregation input has norm {norms.max():.6g} > clip_norm {clip_norm}; "
            "clipping was skipped upstream"
        )
    total = clipped.sum(axis=0) if clipped.shape[0] else np.zeros(clipped.shape[1])
    if noise_multiplier > 0.0:
        total = total + rng.normal(0.0, noise_multiplier * clip_norm, size=total.shape)
    return total / float(lot_size)


def poisson_sample(n_examples: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Ascending indices, each included independently with probability q."""
    if not 0.0 < q <= 1.0:
        raise ConfigError(f"sampling rate must be in (0, 1], got {q}")
    return np.nonzero(rng.random(n_examples) < q)[0]


def adamw_vec(
    state: OptimizerState, vec: np.ndarray, grad: np.ndarray, cfg: DpConfig
) -> tuple[OptimizerState, np.ndarray]:
    """One decoupled-weight-decay Adam update with bias correction."""
    if grad.shape != vec.shape:
        raise ConfigError(f"gradient shape {grad.shape} != parameter shape {vec.shape}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    mhat = m / (1.0 - cfg.beta1**t)
    vhat = v / (1.0 - cfg.beta2**t)
    new_vec = vec - cfg.learning_rate * (mhat / (np.sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * vec)
    if not np.all(np.isfinite(new_vec)):
        raise NumericError(f"non-finite parameter update at optimizer step {t}")
    return OptimizerState(m=m, v=v, t=t), new_vec


def adamw_step(
    state: OptimizerState, params: ParameterSet, noisy_grad: np.ndarray, cfg: DpConfig
) -> tuple[OptimizerState, ParameterSet]:
    """AdamW over the adapter scalars only; base weights are untouched."""
    if noisy_grad.shape != (params.trainable_dim,):
        raise ConfigError(
            f"gradient length {noisy_grad.shape} != trainable_dim {params.trainable_dim}"
        )
    state, vec = adamw_vec(state, params.flat_adapters(), noisy_grad, cfg)
    return state, params.with_flat_adapters(vec)


@dataclass
class StepLogRow:
    step: int
    realized_batch: int
    mean_preclip_norm: float
    frac_clipped: float
    loss: float
    epsilon: float | None  # None in non-private runs


@dataclass
class TrainState:
    """Everything a training loop mutates; checkpointable.

    The batch schedule is a pure function of (seed, step), so a state
    restored from a checkpoint continues exactly where it left off.
    """

    params: ParameterSet
    opt: OptimizerState
    step: int = 0
    rows: list[StepLogRow] = field(default_factory=list)


def dp_steps_per_epoch(n_examples: int, lot_size: int) -> int:
    """Steps in one expected data pass under Poisson sampling."""
    return max(1, n_examples // lot_size)


def minibatch_steps_per_epoch(n_examples: int, batch_size: int) -> int:
    return -(-n_examples // batch_size)


def dp_train_steps(
    state: TrainState,
    members,
    dpcfg: DpConfig,
    accountant: AccountantState,
    seed: int,
    n_steps: int,
    epsilon_max: float | None = None,
    delta: float | None = None,
) -> tuple[AccountantState, bool]:
    """Up to ``n_steps`` DP-SGD steps; stops early if the budget binds.

    Returns the advanced accountant and whether epsilon_max stopped the
    run (taking one more step would push epsilon(delta) past it).
    Appends one StepLogRow per executed step.
    """
    n = len(members)
    q = dpcfg.sampling_rate(n)
    if not math.isclose(accountant.q, q, rel_tol=1e-12) or accountant.sigma != dpcfg.noise_multiplier:
        raise ConfigError(
            f"accountant configured for (q={accountant.q}, sigma={accountant.sigma}) "
            f"but training uses (q={q}, sigma={dpcfg.noise_multiplier})"
        )
    allowed = None
    if epsilon_max is not None:
        if delta is None:
            raise ConfigError("epsilon_max requires a delta")
        allowed = steps_until_budget(q, dpcfg.noise_multiplier, delta, epsilon_max, accountant.orders)
    ctx_len = state.params.cfg.context_len
    dim = state.params.trainable_dim

    for _ in range(n_steps):
        if allowed is not None and accountant.steps + 1 > allowed:
            return accountant, True
        step = state.step
        idx = poisson_sample(n, q, rng_for(seed, f"sampling.{step}"))
        if idx.size:
            batch = make_batch([members[int(i)] for i in idx], ctx_len)
            G, loss = per_example_gradients(state.params, batch)
            clipped, norms = clip_batch(G, dpcfg.clip_norm)
            mean_norm = float(norms.mean())
            frac_clipped = float((norms > dpcfg.clip_norm).mean())
            loss_val = loss.mean_loss
        else:
            clipped = np.zeros((0, dim))
            mean_norm, frac_clipped, loss_val = math.nan, math.nan, math.nan
        noisy = noisy_aggregate(
            clipped, dpcfg.clip_norm, dpcfg.noise_multiplier, dpcfg.lot_size,
            rng_for(seed, f"noise.{step}"),
        )
        state.opt, state.params = adamw_step(state.opt, state.params, noisy, dpcfg)
        accountant = accountant.accumulate(1)
        eps = accountant.epsilon(delta)[0] if delta is not None else None
        state.rows.append(StepLogRow(step, int(idx.size), mean_norm, frac_clipped, loss_val, eps))
        state.step += 1
    return accountant, False


def dp_train_epoch(
    state: TrainState,
    members,
    dpcfg: DpConfig,
    accountant: AccountantState,
    seed: int,
    epsilon_max: float | None = None,
    delta: float | None = None,
) -> tuple[AccountantState, bool]:
    """One expected data pass of DP-SGD (or less if the budget binds)."""
    return dp_train_steps(
        state, members, dpcfg, accountant, seed,
        n_steps=dp_steps_per_epoch(len(members), dpcfg.lot_size),
        epsilon_max=epsilon_max, delta=delta,
    )


def baseline_train_steps(state: TrainState, members, dpcfg: DpConfig, seed: int, n_steps: int) -> None:
    """Plain minibatch AdamW over the members (no clip, no noise).

    Batches come from a per-epoch shuffled permutation; within a batch,
    gradients are summed in ascending dataset order and divided by the
    realized batch size, mirroring the private loop's aggregation.
    """
    n = len(members)
    spe = minibatch_steps_per_epoch(n, dpcfg.lot_size)
    ctx_len = state.params.cfg.context_len
    for _ in range(n_steps):
        epoch, slot = divmod(state.step, spe)
        perm = rng_for(seed, f"baseline-shuffle.{epoch}").permutation(n)
        sel = np.sort(perm[slot * dpcfg.lot_size : (slot + 1) * dpcfg.lot_size])
        batch = make_batch([members[int(i)] for i in sel], ctx_len)
        G, loss = per_example_gradients(state.params, batch)
        norms = np.linalg.norm(G, axis=1)
        grad = G.sum(axis=0) / float(len(sel))
        state.opt, state.params = adamw_step(state.opt, state.params, grad, dpcfg)
        state.rows.append(
            StepLogRow(
                state.step, int(len(sel)), float(norms.mean()),
                float((norms > dpcfg.clip_norm).mean()), loss.mean_loss, None,
            )
        )
        state.step += 1


def baseline_train_epoch(state: TrainState, members, dpcfg: DpConfig, seed: int) -> None:
    baseline_train_steps(
        state, members, dpcfg, seed,
        n_steps=minibatch_steps_per_epoch(len(members), dpcfg.lot_size),
    )


@dataclass
class PretrainState:
    """Full-weight training state for the base-model phase."""

    params: ParameterSet
    opt: OptimizerState
    step: int = 0
    rows: list[StepLogRow] = field(default_factory=list)


def pretrain_steps(
    state: PretrainState,
    examples,
    dpcfg: DpConfig,
    seed: int,
    n_steps: int,
    fresh_cuts: bool = True,
    min_middle: int = 8,
) -> None:
    """Standard AdamW over all base weights (adapters stay at their
    zero-contribution init).

    With ``fresh_cuts`` (the default) every step redraws the infill cut
    points of its batch, so the base model learns the general task
    rather than one fixed completion per document. Membership semantics
    do not apply here; fine-tuning keeps cuts fixed.
    """
    n = len(examples)
    spe = minibatch_steps_per_epoch(n, dpcfg.lot_size)
    cfg = state.params.cfg
    keys = base_keys(cfg)
    for _ in range(n_steps):
        epoch, slot = divmod(state.step, spe)
        perm = rng_for(seed, f"pretrain-shuffle.{epoch}").permutation(n)
        sel = np.sort(perm[slot * dpcfg.lot_size : (slot + 1) * dpcfg.lot_size])
        chosen = [examples[int(i)] for i in sel]
        if fresh_cuts:
            cut_rng = rng_for(seed, f"pretrain-cuts.{state.step}")
            chosen = [_recut(ex, cut_rng, min_middle, cfg.context_len) for ex in chosen]
        batch = make_batch(chosen, cfg.context_len)
        grads, loss = mean_loss_base_gradients(state.params, batch)
        gvec = flatten_arrays(grads, keys)
        pvec = flatten_arrays(state.params.base, keys)
        state.opt, new_vec = adamw_vec(state.opt, pvec, gvec, dpcfg)
        new_base = unflatten_arrays(new_vec, state.params.base, keys)
        state.params = ParameterSet(
            cfg=cfg, lora=state.params.lora, base=new_base, adapters=state.params.adapters
        )
        state.rows.append(
            StepLogRow(state.step, int(len(sel)), math.nan, math.nan, loss.mean_loss, None)
        )
        state.step += 1


def _recut(ex, rng, min_middle: int, max_len: int):
    """Redraw the FIM cut points of an example's underlying text."""
    doc = Document(id=ex.id, text=ex.prefix_text + ex.middle_text + ex.suffix_text, origin="recut")
    fresh = make_fim_example(doc, rng, min_middle=min_middle, max_len=max_len)
    return fresh if fresh is not None else ex
