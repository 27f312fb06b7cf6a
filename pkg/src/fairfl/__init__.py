"""Energy-fair, differentially private federated learning over wireless links."""

__version__ = "0.1.0"

from .config import ConfigError, SimConfig, load_config, save_config
from .simulator import RoundRecord, run_simulation, summarize

__all__ = ["ConfigError", "SimConfig", "load_config", "save_config", "RoundRecord", "run_simulation",
           "summarize", "__version__"]
