"""Split-TCP acceleration lab: latency model, event simulator and chain proxy."""

__version__ = "0.1.0"
