import logging
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by geometry, fields and the integrator"""

    mfd: float = 1e-9
    descent: float = 1e-8
    lie: float = 1e-8
    surface: float = 1e-7
    tan: float = 1e-8
    event: float = 1e-10
    corner: float = 1e-5
    z_max: int = 8
    fd_step: float = 1e-6

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"tolerance '{name}' must be positive, got {value}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()


class Settings:
    """Process-level settings taken from the environment"""

    def __init__(self):
        self.out_dir = os.getenv('SMC_OUT_DIR', 'out')
        self.log_level = os.getenv('SMC_LOG_LEVEL', 'INFO').upper()
        self.jobs = int(os.getenv('SMC_JOBS', 1))
        self.descent_seed = int(os.getenv('SMC_DESCENT_SEED', 42))


settings = Settings()


def configure_logging(level: Optional[str] = None, quiet: bool = False):
    """Configure the root logger once for CLI use"""
    if quiet:
        level = 'WARNING'
    level = (level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    logging.getLogger().setLevel(getattr(logging, level, logging.INFO))
