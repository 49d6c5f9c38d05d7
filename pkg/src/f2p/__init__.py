"""Face-to-parameters: recover procedural face recipes from rendered images."""

__version__ = "0.1.0"
