from .base import EnvSpec, ResetMode, StepResult, Terminal, compute_return
from .disentangle import ArmConfig, DisentangleEnv, Shapes
from .maze import MazeConfig, MazeEnv, MazeGrid, load_maze, parse_maze

__all__ = [
    "ArmConfig", "DisentangleEnv", "EnvSpec", "MazeConfig", "MazeEnv", "MazeGrid", "ResetMode",
    "Shapes", "StepResult", "Terminal", "compute_return", "load_maze", "parse_maze",
]
