"""Desk-scale lab for privately fine-tuning a fill-in-the-middle code model.

The pipeline trains a tiny decoder-only transformer on a byte-level FIM
corpus twice, once with plain AdamW and once with DP-SGD, tracks the
(epsilon, delta) budget with a Renyi-DP accountant, and audits both
checkpoints with membership-inference attacks.
"""

__version__ = "0.1.0"
