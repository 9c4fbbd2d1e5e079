"""Fleet management toolkit and deterministic fleet simulator."""

__version__ = "0.1.0"
