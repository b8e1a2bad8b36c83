"""Tiny decoder-only transformer with frozen base weights and LoRA adapters.

Pre-norm causal transformer in float64 NumPy with a hand-written
backward pass. Low-rank adapter pairs (A, B) sit on the attention query
and value projections of every layer; the effective projection is
W + s * B @ A with B zero-initialized, so a freshly adapted model is
exactly the base model. During private fine-tuning only the adapter
scalars receive gradients.

Shapes: tokens (N, T); activations (N, T, D) flattened to (N*T, D) for
the linear algebra; attention works per head in (N, H, T, dh).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .corpus import EOM, MID, PAD, PRE, SUF, VOCAB_SIZE, tokenize
from .errors import ConfigError, NumericError
from .seeding import rng_for

INIT_STD = 0.02
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 128
    n_layers: int = 2
    n_heads: int = 4
    context_len: int = 256
    ffn_mult: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "context_len", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def ffn_dim(self) -> int:
        return self.ffn_mult * self.d_model


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 8
    alpha: float = 16.0

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def validate(self, cfg: ModelConfig) -> None:
        if not 1 <= self.rank <= cfg.d_model:
            raise ConfigError(f"LoRA rank {self.rank} outside [1, d_model={cfg.d_model}]")


# Adapter sites: attention query and value projections, every layer.
ADAPTER_SITES = ("q", "v")


def adapter_keys(cfg: ModelConfig) -> list[str]:
    """Canonical flattening order of the trainable adapter matrices."""
    keys = []
    for layer in range(cfg.n_layers):
        for site in ADAPTER_SITES:
            keys.append(f"l{layer}.attn.{site}.A")
            keys.append(f"l{layer}.attn.{site}.B")
    return keys


def base_keys(cfg: ModelConfig) -> list[str]:
    keys = ["tok_emb", "pos_emb"]
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        keys += [p + "ln1.g", p + "ln1.b"]
        keys += [p + "attn." + n for n in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")]
        keys += [p + "ln2.g", p + "ln2.b"]
        keys += [p + "ffn." + n for n in ("w1", "b1", "w2", "b2")]
    keys += ["lnf.g", "lnf.b", "lm_head"]
    return keys


@dataclass
class ParameterSet:
    """Frozen base weights plus trainable low-rank adapter weights."""

    cfg: ModelConfig
    lora: LoraConfig
    base: dict[str, np.ndarray]
    adapters: dict[str, np.ndarray]

    @property
    def trainable_dim(self) -> int:
        return sum(a.size for a in self.adapters.values())

    def flat_adapters(self) -> np.ndarray:
        keys = adapter_keys(self.cfg)
        return np.concatenate([self.adapters[k].ravel() for k in keys])

    def with_flat_adapters(self, vec: np.ndarray) -> "ParameterSet":
        """New ParameterSet with adapters taken from a flat vector.

        The base dict is shared (it is frozen); adapter arrays are fresh.
        """
        if vec.shape != (self.trainable_dim,):
            raise ConfigError(f"adapter vector has shape {vec.shape}, want ({self.trainable_dim},)")
        new = {}
        off = 0
        for k in adapter_keys(self.cfg):
            a = self.adapters[k]
            new[k] = vec[off : off + a.size].reshape(a.shape).copy()
            off += a.size
        return ParameterSet(cfg=self.cfg, lora=self.lora, base=self.base, adapters=new)

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            cfg=self.cfg,
            lora=self.lora,
            base={k: v.copy() for k, v in self.base.items()},
            adapters={k: v.copy() for k, v in self.adapters.items()},
        )


def base_fingerprint(params: ParameterSet) -> str:
    """SHA-256 over the frozen base weights (freezing-contract checks)."""
    h = hashlib.sha256()
    for k in base_keys(params.cfg):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params.base[k]).tobytes())
    return h.hexdigest()


def init_model(cfg: ModelConfig, lora: LoraConfig, seed: int) -> ParameterSet:
    """Scaled-normal base init; adapter A ~ N(0, 1/r^2), B = 0.

    Residual output projections (attention out, FFN down) are drawn with
    std 0.02/sqrt(2*n_layers) so the residual stream keeps unit scale.
    Deterministic for a fixed seed.
    """
    lora.validate(cfg)
    rng = rng_for(seed, "pretrain-init")
    D, F, V = cfg.d_model, cfg.ffn_dim, cfg.vocab_size
    resid_std = INIT_STD / np.sqrt(2.0 * cfg.n_layers)

    def normal(shape, std):
        return rng.normal(0.0, std, size=shape)

    base: dict[str, np.ndarray] = {}
    for key in base_keys(cfg):
        name = key.split(".")[-1]
        if key == "tok_emb":
            base[key] = normal((V, D), INIT_STD)
        elif key == "pos_emb":
            base[key] = normal((cfg.context_len, D), INIT_STD)
        elif key == "lm_head":
            base[key] = normal((V, D), INIT_STD)
        elif name == "g":
            base[key] = np.ones(D)
        elif name in ("b", "bq", "bk", "bv", "bo"):
            base[key] = np.zeros(D)
        elif name == "b1":
            base[key] = np.zeros(F)
        elif name == "b2":
            base[key] = np.zeros(D)
        elif name in ("wq", "wk", "wv"):
            base[key] = normal((D, D), INIT_STD)
        elif name == "wo":
            base[key] = normal((D, D), resid_std)
        elif name == "w1":
            base[key] = normal((F, D), INIT_STD)
        elif name == "w2":
            base[key] = normal((D, F), resid_std)
        else:
            raise AssertionError(f"unhandled base key {key}")

    arng = rng_for(seed, "adapter-init")
    adapters: dict[str, np.ndarray] = {}
    for key in adapter_keys(cfg):
        if key.endswith(".A"):
            adapters[key] = arng.normal(0.0, 1.0 / lora.rank, size=(lora.rank, D))
        else:
            adapters[key] = np.zeros((D, lora.rank))
    return ParameterSet(cfg=cfg, lora=lora, base=base, adapters=adapters)


@dataclass
class Batch:
    """Padded token matrix with shifted targets and loss masks."""

    tokens: np.ndarray  # (N, T) int64, PAD beyond each row's length
    targets: np.ndarray  # (N, T) int64, tokens shifted left by one
    loss_mask: np.ndarray  # (N, T) bool
    n_masked: np.ndarray  # (N,) int64
    example_ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


def make_batch(examples, context_len: int) -> Batch:
    if not examples:
        raise ConfigError("cannot build an empty batch")
    lengths = [len(ex.sequence) for ex in examples]
    too_long = [ex.id for ex, n in zip(examples, lengths) if n > context_len]
    if too_long:
        raise ConfigError(f"sequences exceed context_len={context_len}: {too_long[:5]}")
    N, T = len(examples), max(lengths)
    tokens = np.full((N, T), PAD, dtype=np.int64)
    mask = np.zeros((N, T), dtype=bool)
    for i, ex in enumerate(examples):
        n = lengths[i]
        tokens[i, :n] = ex.sequence
        mask[i, :n] = ex.loss_mask
    targets = np.full((N, T), PAD, dtype=np.int64)
    targets[:, :-1] = tokens[:, 1:]
    # a position is scored only if its target exists
    mask[:, -1] = False
    return Batch(
        tokens=tokens,
        targets=targets,
        loss_mask=mask,
        n_masked=mask.sum(axis=1).astype(np.int64),
        example_ids=[ex.id for ex in examples],
    )


def forward(params: ParameterSet, tokens: np.ndarray):
    """Run the transformer; returns (logits (N, T, V), cache for backward)."""
    cfg, lora = params.cfg, params.lora
    base, ad = params.base, params.adapters
    N, T = tokens.shape
    if T > cfg.context_len:
        raise ConfigError(f"sequence length {T} exceeds context_len {cfg.context_len}")
    D, H, dh = cfg.d_model, cfg.n_heads, cfg.head_dim
    R = N * T
    s = lora.scaling
    inv = 1.0 / np.sqrt(dh)

    h = base["tok_emb"][tokens] + base["pos_emb"][:T]
    layers = []
    for layer in range(cfg.n_layers):
        p = f"l{layer}."
        x_in = h.reshape(R, D)
        u, mu1, rstd1 = K.layernorm_fwd(x_in, base[p + "ln1.g"], base[p + "ln1.b"], LN_EPS)

        q = u @ base[p + "attn.wq"].T + base[p + "attn.bq"]
        xa_q = u @ ad[p + "attn.q.A"].T
        q += s * (xa_q @ ad[p + "attn.q.B"].T)
        k = u @ base[p + "attn.wk"].T + base[p + "attn.bk"]
        v = u @ base[p + "attn.wv"].T + base[p + "attn.bv"]
        xa_v = u @ ad[p + "attn.v.A"].T
        v += s * (xa_v @ ad[p + "attn.v.B"].T)

        qh = q.reshape(N, T, H, dh).transpose(0, 2, 1, 3)
        kh = k.reshape(N, T, H, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(N, T, H, dh).transpose(0, 2, 1, 3)
        scores = np.ascontiguousarray(qh @ kh.transpose(0, 1, 3, 2) * inv)
        probs = K.causal_softmax_fwd(scores.reshape(N * H, T, T)).reshape(N, H, T, T)
        ctx = (probs @ vh).transpose(0, 2, 1, 3).reshape(R, D)
        attn_out = ctx @ base[p + "attn.wo"].T + base[p + "attn.bo"]

        h_mid = x_in + attn_out
        u2, mu2, rstd2 = K.layernorm_fwd(h_mid, base[p + "ln2.g"], base[p + "ln2.b"], LN_EPS)
        z1 = u2 @ base[p + "ffn.w1"].T + base[p + "ffn.b1"]
        f = K.gelu_fwd(z1)
        ffn_out = f @ base[p + "ffn.w2"].T + base[p + "ffn.b2"]
        h = (h_mid + ffn_out).reshape(N, T, D)

        layers.append(
            dict(
                x_in=x_in, mu1=mu1, rstd1=rstd1, u=u, xa_q=xa_q, xa_v=xa_v,
                qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx,
                h_mid=h_mid, mu2=mu2, rstd2=rstd2, u2=u2, z1=z1, f=f,
            )
        )

    h_last = h.reshape(R, D)
    hf, muf, rstdf = K.layernorm_fwd(h_last, base["lnf.g"], base["lnf.b"], LN_EPS)
    logits = hf @ base["lm_head"].T
    cache = dict(tokens=tokens, layers=layers, h_last=h_last, muf=muf, rstdf=rstdf, hf=hf, N=N, T=T)
    return logits.reshape(N, T, cfg.vocab_size), cache


@dataclass
class LossResult:
    per_example: np.ndarray  # (N,), NaN where excluded
    mean_loss: float
    excluded: list[str]
    nll_rows: np.ndarray = field(repr=False, default=None)  # (N*T,) per-position nll


def loss_from_nll(nll_rows: np.ndarray, batch: Batch) -> LossResult:
    N, T = batch.tokens.shape
    per_pos = nll_rows.reshape(N, T)
    counts = batch.n_masked
    with np.errstate(invalid="ignore", divide="ignore"):
        per_ex = per_pos.sum(axis=1) / counts
    excluded = [batch.example_ids[i] for i in np.nonzero(counts == 0)[0]]
    per_ex = np.where(counts > 0, per_ex, np.nan)
    included = per_ex[counts > 0]
    if included.size and not np.all(np.isfinite(included)):
        bad = [batch.example_ids[i] for i in np.nonzero(~np.isfinite(per_ex) & (counts > 0))[0]]
        raise NumericError(f"non-finite loss for examples {bad[:5]}")
    mean = float(included.mean()) if included.size else float("nan")
    return LossResult(per_example=per_ex, mean_loss=mean, excluded=excluded, nll_rows=nll_rows)


def forward_loss(params: ParameterSet, batch: Batch) -> LossResult:
    """Per-example mean masked cross-entropy and the batch mean.

    Examples with zero masked positions are excluded from the mean and
    reported in ``excluded``.
    """
    logits, _ = forward(params, batch.tokens)
    V = params.cfg.vocab_size
    nll, _ = K.masked_ce(logits.reshape(-1, V), batch.targets.ravel(), batch.loss_mask.ravel())
    return loss_from_nll(nll, batch)


def _backward(params: ParameterSet, cache: dict, dlogits_flat: np.ndarray, want_full: bool):
    """Backpropagate ``dlogits_flat`` (R, V); all loss scaling is in the seed.

    Returns (base_grads or None, site_tapes) where site_tapes maps
    adapter site prefix ("l0.attn.q") to (u, xa, dout) flat arrays for
    adapter-gradient assembly.
    """
    cfg, lora = params.cfg, params.lora
    base, ad = params.base, params.adapters
    N, T = cache["N"], cache["T"]
    D, H, hd = cfg.d_model, cfg.n_heads, cfg.head_dim
    R = N * T
    s = lora.scaling
    inv = 1.0 / np.sqrt(hd)
    grads: dict[str, np.ndarray] | None = {} if want_full else None
    tapes: dict[str, tuple] = {}

    dhf = dlogits_flat @ base["lm_head"]
    if want_full:
        grads["lm_head"] = dlogits_flat.T @ cache["hf"]
    dh, dgf, dbf = K.layernorm_bwd(dhf, cache["h_last"], base["lnf.g"], cache["muf"], cache["rstdf"])
    if want_full:
        grads["lnf.g"], grads["lnf.b"] = dgf, dbf

    for layer in reversed(range(cfg.n_layers)):
        p = f"l{layer}."
        c = cache["layers"][layer]

        # FFN branch
        dffn = dh
        if want_full:
            grads[p + "ffn.w2"] = dffn.T @ c["f"]
            grads[p + "ffn.b2"] = dffn.sum(axis=0)
        df = dffn @ base[p + "ffn.w2"]
        dz1 = K.gelu_bwd(c["z1"], df)
        if want_full:
            grads[p + "ffn.w1"] = dz1.T @ c["u2"]
            grads[p + "ffn.b1"] = dz1.sum(axis=0)
        du2 = dz1 @ base[p + "ffn.w1"]
        dx2, dg2, db2 = K.layernorm_bwd(du2, c["h_mid"], base[p + "ln2.g"], c["mu2"], c["rstd2"])
        if want_full:
            grads[p + "ln2.g"], grads[p + "ln2.b"] = dg2, db2
        dh_mid = dh + dx2

        # attention branch
        dattn = dh_mid
        if want_full:
            grads[p + "attn.wo"] = dattn.T @ c["ctx"]
            grads[p + "attn.bo"] = dattn.sum(axis=0)
        dctx = (dattn @ base[p + "attn.wo"]).reshape(N, T, H, hd).transpose(0, 2, 1, 3)
        probs = c["probs"]
        dprobs = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = probs.transpose(0, 1, 3, 2) @ dctx
        dscores = K.causal_softmax_bwd(
            np.ascontiguousarray(dprobs.reshape(N * H, T, T)),
            np.ascontiguousarray(probs.reshape(N * H, T, T)),
        ).reshape(N, H, T, T)
        dqh = dscores @ c["kh"] * inv
        dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"] * inv
        dq = dqh.transpose(0, 2, 1, 3).reshape(R, D)
        dk = dkh.transpose(0, 2, 1, 3).reshape(R, D)
        dv = dvh.transpose(0, 2, 1, 3).reshape(R, D)

        u = c["u"]
        tapes[p + "attn.q"] = (u, c["xa_q"], dq)
        tapes[p + "attn.v"] = (u, c["xa_v"], dv)
        if want_full:
            grads[p + "attn.wq"] = dq.T @ u
            grads[p + "attn.bq"] = dq.sum(axis=0)
            grads[p + "attn.wk"] = dk.T @ u
            grads[p + "attn.bk"] = dk.sum(axis=0)
            grads[p + "attn.wv"] = dv.T @ u
            grads[p + "attn.bv"] = dv.sum(axis=0)

        du = dq @ base[p + "attn.wq"] + s * ((dq @ ad[p + "attn.q.B"]) @ ad[p + "attn.q.A"])
        du += dk @ base[p + "attn.wk"]
        du += dv @ base[p + "attn.wv"] + s * ((dv @ ad[p + "attn.v.B"]) @ ad[p + "attn.v.A"])

        dx1, dg1, db1 = K.layernorm_bwd(du, c["x_in"], base[p + "ln1.g"], c["mu1"], c["rstd1"])
        if want_full:
            grads[p + "ln1.g"], grads[p + "ln1.b"] = dg1, db1
        dh = dh_mid + dx1

    if want_full:
        dh3 = dh.reshape(N, T, D)
        dpos = np.zeros_like(base["pos_emb"])
        dpos[:T] = dh3.sum(axis=0)
        grads["pos_emb"] = dpos
        grads["tok_emb"] = K.embedding_bwd(cache["tokens"].ravel(), dh, cfg.vocab_size)
    return grads, tapes


def _adapter_grads_from_tapes(params: ParameterSet, tapes: dict, N: int, T: int, per_example: bool):
    """Assemble adapter gradients from site tapes in canonical key order.

    With ``per_example=True`` returns (N, trainable_dim); otherwise the
    summed gradient over the batch, shape (trainable_dim,).
    """
    cfg, lora = params.cfg, params.lora
    s = lora.scaling
    r = lora.rank
    D = cfg.d_model
    blocks = []
    for layer in range(cfg.n_layers):
        for site in ADAPTER_SITES:
            u, xa, dout = tapes[f"l{layer}.attn.{site}"]
            B = params.adapters[f"l{layer}.attn.{site}.B"]
            if per_example:
                u3 = u.reshape(N, T, D)
                xa3 = xa.reshape(N, T, r)
                do3 = dout.reshape(N, T, D)
                doB = do3 @ B  # (N, T, r)
                dA = s * (doB.transpose(0, 2, 1) @ u3)  # (N, r, D)
                dB = s * (do3.transpose(0, 2, 1) @ xa3)  # (N, D, r)
                blocks.append(dA.reshape(N, -1))
                blocks.append(dB.reshape(N, -1))
            else:
                doB = dout @ B  # (R, r)
                dA = s * (doB.T @ u)
                dB = s * (dout.T @ xa)
                blocks.append(dA.ravel())
                blocks.append(dB.ravel())
    return np.concatenate(blocks, axis=1 if per_example else 0)


def _grad_seed(batch: Batch, nll_result: LossResult, logits: np.ndarray, V: int, per_example: bool):
    """Row scale for the cross-entropy backward.

    Per-example mode differentiates each example's own mean loss (scale
    1/m_n on its masked rows); mean mode additionally divides by the
    number of included examples.
    """
    counts = batch.n_masked.astype(np.float64)
    included = counts > 0
    safe = np.where(included, counts, 1.0)
    scale_ex = np.where(included, 1.0 / safe, 0.0)
    if not per_example:
        n_inc = int(included.sum())
        if n_inc == 0:
            raise ConfigError("batch has no scorable positions")
        scale_ex = scale_ex / n_inc
    scale = batch.loss_mask.astype(np.float64) * scale_ex[:, None]
    return scale.ravel()


def per_example_gradients(params: ParameterSet, batch: Batch):
    """Gradient of each example's loss w.r.t. the adapter scalars.

    Returns (G, loss) with G of shape (batch, trainable_dim). Uses one
    batched backward plus per-example contraction at the adapter sites;
    must agree with :func:`per_example_gradients_reference`.
    """
    logits, cache = forward(params, batch.tokens)
    V = params.cfg.vocab_size
    flat_logits = np.ascontiguousarray(logits.reshape(-1, V))
    nll, _ = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel())
    loss = loss_from_nll(nll, batch)
    scale = _grad_seed(batch, loss, logits, V, per_example=True)
    _, dlogits = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel(), scale)
    _, tapes = _backward(params, cache, dlogits, want_full=False)
    G = _adapter_grads_from_tapes(params, tapes, batch.size, batch.tokens.shape[1], per_example=True)
    bad = np.nonzero(~np.isfinite(G).all(axis=1))[0]
    if bad.size:
        raise NumericError(f"non-finite gradient for examples {[batch.example_ids[i] for i in bad[:5]]}")
    return G, loss


def per_example_gradients_reference(params: ParameterSet, batch: Batch):
    """Batch-of-one reference for :func:`per_example_gradients`."""
    rows = []
    losses = []
    for i in range(batch.size):
        sub = Batch(
            tokens=batch.tokens[i : i + 1],
            targets=batch.targets[i : i + 1],
            loss_mask=batch.loss_mask[i : i + 1],
            n_masked=batch.n_masked[i : i + 1],
            example_ids=batch.example_ids[i : i + 1],
        )
        G, loss = per_example_gradients(params, sub)
        rows.append(G[0])
        losses.append(loss.per_example[0])
    return np.stack(rows), np.array(losses)


def mean_loss_adapter_gradient(params: ParameterSet, batch: Batch):
    """Gradient of the batch mean loss w.r.t. the adapter scalars.

    Seeds the backward with the mean-loss scale directly (it does not go
    through the per-example path), so it doubles as a consistency oracle:
    averaging per-example gradients must reproduce this vector.
    """
    logits, cache = forward(params, batch.tokens)
    V = params.cfg.vocab_size
    flat_logits = np.ascontiguousarray(logits.reshape(-1, V))
    nll, _ = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel())
    loss = loss_from_nll(nll, batch)
    scale = _grad_seed(batch, loss, logits, V, per_example=False)
    _, dlogits = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel(), scale)
    _, tapes = _backward(params, cache, dlogits, want_full=False)
    g = _adapter_grads_from_tapes(params, tapes, batch.size, batch.tokens.shape[1], per_example=False)
    return g, loss


def mean_loss_base_gradients(params: ParameterSet, batch: Batch):
    """Gradient of the batch mean loss w.r.t. every base weight.

    Used by the non-private pre-training phase (adapters stay at their
    zero-contribution init and receive no updates).
    """
    logits, cache = forward(params, batch.tokens)
    V = params.cfg.vocab_size
    flat_logits = np.ascontiguousarray(logits.reshape(-1, V))
    nll, _ = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel())
    loss = loss_from_nll(nll, batch)
    scale = _grad_seed(batch, loss, logits, V, per_example=False)
    _, dlogits = K.masked_ce(flat_logits, batch.targets.ravel(), batch.loss_mask.ravel(), scale)
    grads, _ = _backward(params, cache, dlogits, want_full=True)
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {key}")
    return grads, loss


def flatten_arrays(arrs: dict[str, np.ndarray], keys: list[str]) -> np.ndarray:
    return np.concatenate([arrs[k].ravel() for k in keys])


def unflatten_arrays(vec: np.ndarray, template: dict[str, np.ndarray], keys: list[str]):
    out = {}
    off = 0
    for k in keys:
        a = template[k]
        out[k] = vec[off : off + a.size].reshape(a.shape).copy()
        off += a.size
    return out


def _detok_lossy(tokens: list[int]) -> str:
    data = bytes(t for t in tokens if t < 256)
    return data.decode("utf-8", errors="replace")


def generate_completion(params: ParameterSet, prefix: str, suffix: str, max_new: int) -> str:
    """Greedy middle completion for one (prefix, suffix) prompt."""
    return generate_completions(params, [(prefix, suffix)], max_new)[0]


def generate_completions(params: ParameterSet, pairs, max_new: int, clamp: bool = False) -> list[str]:
    """Greedy argmax decoding from the [MID] position for many prompts.

    Stops each row at EOM or after ``max_new`` tokens; returns the
    detokenized middles. A prompt that leaves fewer than ``max_new``
    context positions is fatal unless ``clamp`` is set, in which case
    that row's budget shrinks to whatever fits. Deterministic; decoding
    a row alone or in a batch yields the same text.
    """
    cfg = params.cfg
    prompts = []
    budgets = []
    for prefix, suffix in pairs:
        prompt = [PRE] + tokenize(prefix) + [SUF] + tokenize(suffix) + [MID]
        room = cfg.context_len - len(prompt)
        if room < max_new and not clamp:
            raise ConfigError(
                f"prompt of {len(prompt)} tokens + max_new {max_new} exceeds "
                f"context_len {cfg.context_len}"
            )
        prompts.append(prompt)
        budgets.append(min(max_new, max(room, 0)))
    n = len(prompts)
    if max_new == 0 or n == 0:
        return [""] * n

    width = max(len(p) + b for p, b in zip(prompts, budgets)) if prompts else 0
    tokens = np.full((n, max(width, 1)), PAD, dtype=np.int64)
    for i, p in enumerate(prompts):
        tokens[i, : len(p)] = p
    cursor = np.array([len(p) for p in prompts])
    produced = np.zeros(n, dtype=np.int64)
    done = np.array([b == 0 for b in budgets])
    outs: list[list[int]] = [[] for _ in range(n)]

    for _ in range(max_new):
        active = np.nonzero(~done)[0]
        if active.size == 0:
            break
        t_max = int(cursor[active].max())
        logits, _ = forward(params, tokens[active][:, :t_max])
        for row, i in enumerate(active):
            nxt = int(np.argmax(logits[row, cursor[i] - 1]))
            if nxt == EOM:
                done[i] = True
                continue
            outs[i].append(nxt)
            tokens[i, cursor[i]] = nxt
            cursor[i] += 1
            produced[i] += 1
            if produced[i] >= budgets[i]:
                done[i] = True
    return [_detok_lossy(o) for o in outs]


def losses_for_examples(params: ParameterSet, examples, chunk_size: int = 64):
    """Per-example losses over a list of FIM examples, batched for speed.

    Returns (losses (n,), excluded_ids). The value for an example is
    independent of how the list is chunked.
    """
    losses = np.full(len(examples), np.nan)
    excluded: list[str] = []
    for start in range(0, len(examples), chunk_size):
        chunk = examples[start : start + chunk_size]
        res = forward_loss(params, make_batch(chunk, params.cfg.context_len))
        losses[start : start + len(chunk)] = res.per_example
        excluded.extend(res.excluded)
    return losses, excluded
