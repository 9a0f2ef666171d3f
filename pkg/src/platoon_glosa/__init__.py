"""Safe multi-agent speed advisory for mixed CAV/HDV platoons."""

__version__ = "0.1.0"

from .config import GlosaConfig, load_config
from .controllers import ControllerKind
from .pipelines.benchmark import run_benchmark_matrix
from .pipelines.episode import run_episode
from .pipelines.metrics import EpisodeMetrics, compute_metrics
from .safety import SafetyContext, filter_action
from .scenario import ScenarioConfig, build_scenario

__all__ = [
    "__version__",
    "GlosaConfig",
    "load_config",
    "ControllerKind",
    "run_benchmark_matrix",
    "run_episode",
    "EpisodeMetrics",
    "compute_metrics",
    "SafetyContext",
    "filter_action",
    "ScenarioConfig",
    "build_scenario",
]
