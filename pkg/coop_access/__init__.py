"""
Coop Access - cooperative grant-free access simulator

Joint activity detection and channel estimation for multi-cell grant-free
massive access with Markov user activity, sliding-window message passing,
state evolution and finite-fronthaul schemes.
"""

__version__ = "1.0.0"
VERSION_STRING = f"coop-access v{__version__}"

__all__ = ["__version__", "VERSION_STRING"]
