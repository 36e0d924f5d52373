"""Cross-lingual discrete diffusion translation pipeline."""

__version__ = "0.1.0"
