from .config import PRESETS, ProjectConfig, default_config, preset
from .jobs import Job, JobQueue, QueueFull, file_sha256
from .service import GatewayState, create_app
from .cli import build_parser, main

__all__ = [
    "PRESETS", "ProjectConfig", "default_config", "preset",
    "Job", "JobQueue", "QueueFull", "file_sha256",
    "GatewayState", "create_app", "build_parser", "main",
]
