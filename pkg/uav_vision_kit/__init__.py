"""UAV vision kit - direction prediction, separable convolution and onboard budgets."""

__version__ = "0.1.0"
