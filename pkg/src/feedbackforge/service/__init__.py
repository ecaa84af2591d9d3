from .app import ROUTE_ACCESS, create_app
from .config import AppConfig, load_config
from .jobs import GenerationJobManager
from .pipeline import run_generation
from .seed import seed_fixtures

__all__ = [
    "AppConfig",
    "GenerationJobManager",
    "ROUTE_ACCESS",
    "create_app",
    "load_config",
    "run_generation",
    "seed_fixtures",
]
