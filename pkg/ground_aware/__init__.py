"""Ground-aware lidar preprocessing toolkit."""

__version__ = "0.1.0"
