"""Class-wise difficulty-balanced loss with a from-scratch MLP training harness."""

__version__ = "0.1.0"
