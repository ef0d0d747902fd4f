"""Dual-robot collaborative payload transport: simulator, bilevel learner and planning baselines."""

__version__ = "0.1.0"
