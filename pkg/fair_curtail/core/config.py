import logging
import sys
from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

class Settings(BaseSettings):
    
    model_config = SettingsConfigDict(
        env_prefix="FAIR_CURTAIL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )
    
    APP_NAME: str = "FairCurtail"
    APP_VERSION: str = "0.1.0"
    
    LOG: str = "WARNING"
    
    DATA_DIR: Path = Path(__file__).parent.parent / "data"
    OUTPUT_DIR: Path = Path("results")
    
    @property
    def TESTBED_PATH(self) -> Path:
        
        return self.DATA_DIR / "testbed.toml"
    
    @property
    def DUCK_CURVE_PATH(self) -> Path:
        
        return self.DATA_DIR / "duck_curve.toml"
    
    TOLERANCE_KW: float = 1e-2
    BOX_TOLERANCE_KW: float = 1e-9
    
    PF_TOLERANCE: float = 1e-8
    PF_MAX_ITERATIONS: int = 50
    
    BISECTION_MAX_ITERATIONS: int = 40
    GRADIENT_STEP_KW: float = 1e-3
    NASH_EPSILON: float = 1e-9
    REPAIR_MAX_HALVINGS: int = 30
    ASCENT_MAX_ITERATIONS: int = 500
    
    RESOLUTION_MINUTES: int = 15
    DEFAULT_JOBS: int = 1

@lru_cache()
def get_settings() -> Settings:
    
    return Settings()

def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stderr handler on the package logger.

    The level defaults to ``Settings.LOG`` (env var ``FAIR_CURTAIL_LOG``).
    """
    level_name = (level or get_settings().LOG).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    
    logger = logging.getLogger("fair_curtail")
    logger.setLevel(numeric)
    
    if not any(getattr(h, "_fair_curtail", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._fair_curtail = True
        logger.addHandler(handler)
