"""iolens: syscall-level I/O observability and diagnosis toolkit."""

__version__ = "0.1.0"
