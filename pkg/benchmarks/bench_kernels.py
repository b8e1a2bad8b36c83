#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the NumPy fallback.

Times each fused kernel on training-shaped inputs, then a full
per-example-gradient step with each backend. Run after `pip install -e .`:

    python benchmarks/bench_kernels.py [--batch 32] [--ctx 128] [--d-model 96]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dpfim.kernels import get_backend


def timeit(fn, *args, repeat=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(batch, ctx, d_model, n_heads, vocab):
    rng = np.random.default_rng(0)
    R = batch * ctx
    x = rng.normal(size=(R, d_model))
    dy = rng.normal(size=(R, d_model))
    gamma = rng.normal(size=d_model)
    beta = rng.normal(size=d_model)
    scores = np.ascontiguousarray(rng.normal(size=(batch * n_heads, ctx, ctx)))
    dp = np.ascontiguousarray(rng.normal(size=scores.shape))
    z = rng.normal(size=(R, 4 * d_model))
    dz = rng.normal(size=z.shape)
    logits = np.ascontiguousarray(rng.normal(size=(R, vocab)))
    targets = rng.integers(0, vocab, size=R)
    mask = rng.random(R) < 0.5
    scale = mask / ctx
    tokens = rng.integers(0, vocab, size=R)

    numpy_k = get_backend("numpy")
    compiled = get_backend("compiled")
    probs = numpy_k.causal_softmax_fwd(scores)

    cases = [
        ("layernorm_fwd", lambda k: k.layernorm_fwd(x, gamma, beta)),
        ("layernorm_bwd", lambda k: k.layernorm_bwd(dy, x, gamma, x.mean(axis=1), np.ones(R))),
        ("causal_softmax_fwd", lambda k: k.causal_softmax_fwd(scores)),
        ("causal_softmax_bwd", lambda k: k.causal_softmax_bwd(dp, probs)),
        ("gelu_fwd", lambda k: k.gelu_fwd(z)),
        ("gelu_bwd", lambda k: k.gelu_bwd(z, dz)),
        ("masked_ce (loss)", lambda k: k.masked_ce(logits, targets, mask)),
        ("masked_ce (grad)", lambda k: k.masked_ce(logits, targets, mask, scale)),
        ("embedding_bwd", lambda k: k.embedding_bwd(tokens, dy, vocab)),
    ]
    print(f"{'kernel':<22} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        t_np = timeit(call, numpy_k)
        t_cy = timeit(call, compiled)
        print(f"{name:<22} {t_np * 1e3:>8.2f}ms {t_cy * 1e3:>8.2f}ms {t_np / t_cy:>7.2f}x")


def bench_train_step(batch, ctx, d_model, n_heads):
    import importlib
    import os

    from dpfim.corpus import make_fim_example
    from dpfim.seeding import rng_for
    from dpfim.synth import synth_documents

    docs = synth_documents(batch, seed=9, target_bytes=max(32, ctx - 24))
    rng = rng_for(9, "fim-cuts")
    examples = [e for e in (make_fim_example(d, rng, 8, ctx) for d in docs) if e]

    results = {}
    for backend in ("numpy", "compiled"):
        os.environ["DPFIM_KERNELS"] = backend
        import dpfim.kernels
        import dpfim.model

        importlib.reload(dpfim.kernels)
        importlib.reload(dpfim.model)
        cfg = dpfim.model.ModelConfig(d_model=d_model, n_layers=2, n_heads=n_heads, context_len=ctx)
        params = dpfim.model.init_model(cfg, dpfim.model.LoraConfig(rank=16, alpha=32.0), seed=1)
        b = dpfim.model.make_batch(examples, ctx)
        results[backend] = timeit(
            lambda: dpfim.model.per_example_gradients(params, b), repeat=3
        )
    print(f"\nper-example gradient step (batch={batch}, ctx={ctx}, d_model={d_model}):")
    for backend, t in results.items():
        print(f"  {backend:<9} {t * 1e3:8.1f} ms/step")
    print(f"  speedup   {results['numpy'] / results['compiled']:8.2f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--ctx", type=int, default=128)
    ap.add_argument("--d-model", type=int, default=96)
    ap.add_argument("--n-heads", type=int, default=4)
    ap.add_argument("--vocab", type=int, default=261)
    args = ap.parse_args()
    bench_kernels(args.batch, args.ctx, args.d_model, args.n_heads, args.vocab)
    bench_train_step(args.batch, args.ctx, args.d_model, args.n_heads)


if __name__ == "__main__":
    main()
