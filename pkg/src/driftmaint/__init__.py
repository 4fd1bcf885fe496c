"""Cost-aware maintenance of a frozen-encoder detector on drifting data streams."""

__version__ = "0.1.0"
