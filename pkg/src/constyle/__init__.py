"""Degradation synthesis, Mix Degradations tiling, metrics and desk-scale
contrastive prompter pre-training."""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402,F401
