import importlib
from typing import Optional


def load_class_from_string(class_path: str, base: Optional[type] = None):
    """
    Load a class from its dotted path.

    Args:
        class_path: full path, e.g. 'privateequilibria.games.beach_mountain.beach_mountain_game.BeachMountainGame'
        base: when given, the loaded class must subclass it

    Returns:
        the class object
    """
    try:
        module_path, class_name = class_path.rsplit('.', 1)
        module = importlib.import_module(module_path)
        loaded = getattr(module, class_name)
    except Exception as e:
        raise ImportError(f"cannot load class {class_path}: {str(e)}")
    if base is not None and not (isinstance(loaded, type) and issubclass(loaded, base)):
        raise TypeError(f"class {class_path} must inherit from {base.__name__}")
    return loaded
