"""Self-correcting, consistency-preserving metric GAN toolkit for speech enhancement."""
from . import dsp, losses, metrics, surgery
from .errors import ScpganError

__version__ = "0.1.0"

__all__ = ["dsp", "losses", "metrics", "surgery", "ScpganError", "__version__"]
