"""Certify and falsify nonlinear specifications of ReLU networks."""
__version__ = "0.1.0"
