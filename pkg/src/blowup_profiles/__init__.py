"""Self-similar blow-up profiles of u_t = (u^m)_xx + |x|^sigma u^p."""

__version__ = "0.1.0"
