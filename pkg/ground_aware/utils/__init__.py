"""File formats and I/O helpers."""
