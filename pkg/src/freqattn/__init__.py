"""Speaker-recognition toolkit with fine-grained early frequency attention."""

__version__ = "0.1.0"
