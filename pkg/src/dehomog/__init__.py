"""Neural de-homogenization of coarse lamination fields to fine solid-void designs."""

__version__ = "0.1.0"
