"""Mean-square stability analysis and synthesis for loops closed over stochastic channels."""
from .config import DEFAULT, Tolerances, profile
from .errors import NcstabError

__version__ = "0.1.0"
__all__ = ["DEFAULT", "Tolerances", "profile", "NcstabError", "__version__"]
