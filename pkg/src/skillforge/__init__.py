"""skillforge: a tabletop robot-skill workbench.

Compose behaviours into visual programs, let the engine extend each skill's
domain of applicability by autonomous playing, and localize injected software
faults from recorded sensor and call-profile matrices.
"""

__version__ = "0.1.0"

from .catalog import build_engine
from .config import EngineConfig, load_config
from .engine import Engine

__all__ = ["Engine", "EngineConfig", "build_engine", "load_config", "__version__"]
