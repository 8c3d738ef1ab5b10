"""Game families. Each subpackage's public names are re-exported here."""

import importlib
import logging
import pkgutil
from types import ModuleType
from typing import Dict, List

logger = logging.getLogger(__name__)

FAMILY_PACKAGES: Dict[str, ModuleType] = {}
__all__: List[str] = ["FAMILY_PACKAGES"]


def _hoist(package: ModuleType) -> None:
    for name in getattr(package, "__all__", ()):
        if hasattr(package, name):
            globals()[name] = getattr(package, name)
            __all__.append(name)


for _info in pkgutil.iter_modules(__path__, __name__ + "."):
    if not _info.ispkg:
        continue
    _short = _info.name.rsplit(".", 1)[-1]
    try:
        _package = importlib.import_module(_info.name)
    except ImportError as e:
        logger.warning("game family %s not available: %s", _short, e)
        continue
    FAMILY_PACKAGES[_short] = _package
    globals()[_short] = _package
    __all__.append(_short)
    _hoist(_package)
