import os
from typing import Optional, Union

from dotenv import load_dotenv

from nullmanifold.errors import ParameterError

load_dotenv()


class Settings:
    LOG_LEVEL = os.getenv("NULLMANIFOLD_LOG_LEVEL", "WARNING")

    # raw value; parsed when threads are resolved so a bad value fails inside the CLI
    THREADS: Union[str, int, None] = os.getenv("NULLMANIFOLD_THREADS")

    LENGTHSCALE = float(os.getenv("NULLMANIFOLD_LENGTHSCALE", "0.4"))
    NOISE = float(os.getenv("NULLMANIFOLD_NOISE", "1e-6"))
    THRESHOLD = float(os.getenv("NULLMANIFOLD_THRESHOLD", "0.995"))

    EPS_PROJ = float(os.getenv("NULLMANIFOLD_EPS_PROJ", "1e-6"))
    GAMMA = float(os.getenv("NULLMANIFOLD_GAMMA", "1.5"))
    MAX_STEPS = int(os.getenv("NULLMANIFOLD_MAX_STEPS", "10000"))

    # random restarts per family instance; fewer leave self-motion components unvisited
    FAMILY_RESTARTS = int(os.getenv("NULLMANIFOLD_FAMILY_RESTARTS", "16"))

    GRID_RESOLUTION = 0.05
    MAX_GRID_CELLS = 10**8

    def __init__(self):
        self._cli_threads: Optional[int] = None

    def set_cli_threads(self, threads: Optional[int]):
        self._cli_threads = threads

    def env_threads(self) -> Optional[int]:
        value = self.THREADS
        if value is None or str(value).strip() == "":
            return None
        try:
            return int(value)
        except ValueError:
            raise ParameterError(f"NULLMANIFOLD_THREADS must be an integer, got '{value}'")

    def resolve_threads(self) -> int:
        """Environment beats --threads, which beats the CPU count."""
        env = self.env_threads()
        if env is not None and env > 0:
            return env
        if self._cli_threads is not None and self._cli_threads > 0:
            return self._cli_threads
        return os.cpu_count() or 1


settings = Settings()
