# File: ekfadmm/__init__.py
"""Online learning of regularized parametric models with EKF-ADMM."""

__version__ = "0.1.0"
