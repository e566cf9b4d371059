"""Causal-discovery-driven early warning toolkit for binned clinical time series.

Learns variable-to-outcome and variable-to-variable causal graphs jointly with
an attention encoder-decoder risk model, and serves interpretable what-if
predictions through controlled-direct-effect pathways.
"""

__version__ = "0.1.0"
