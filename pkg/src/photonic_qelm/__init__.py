"""Photonic QELM package: quantum-walk reservoirs, transfer learning, model-free tuning."""

__all__ = [
    "__version__",
]

__version__ = "0.1.0"
