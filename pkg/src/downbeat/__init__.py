"""Downbeat tracking from tatum-synchronous features, a four-network
ensemble and a bar-position hidden Markov model."""

__version__ = "0.1.0"
