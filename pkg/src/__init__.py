"""Final-layer extraction attacks against simulated language-model APIs."""

__version__ = "1.0.0"
