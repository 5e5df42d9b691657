"""Touch-stroke continuous authentication under adversarial conditions."""

__version__ = "0.1.0"
