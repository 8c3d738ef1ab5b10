# privateequilibria package
import logging
import os

__version__ = "0.1.0"

logging.getLogger(__name__).setLevel(os.getenv("PRIVEQ_LOGGING_LEVEL", "WARN"))

from .games import *
