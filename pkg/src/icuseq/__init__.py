"""icuseq: event-tokenized ICU stay modeling at desk scale.

Synthetic cohort generation, event tokenization with cumulative value
features, a sliding-window/global-attention encoder with per-task
classification tokens, GRU baselines, and a training/evaluation harness.
"""

__version__ = "0.1.0"
