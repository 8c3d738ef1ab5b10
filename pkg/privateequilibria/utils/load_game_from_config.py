import inspect
from typing import Any, Dict, List, Optional

import yaml

from privateequilibria.src.base_game import BaseGame
from privateequilibria.src.exceptions import ContractError
from privateequilibria.utils.load_class_from_str import load_class_from_string


def load_games_from_config(config_path: str) -> List[Dict[str, Any]]:
    """
    Build every game variant listed in a family config file.

    Args:
        config_path: path of a ``configs/<family>_config.yaml``

    Returns:
        List[Dict]: one entry per variant with keys 'name', 'game', 'weight', 'config'
    """
    with open(config_path, "r", encoding="utf-8") as f:
        config = yaml.safe_load(f) or {}

    global_config = config.get("global_config", {})
    class_name = global_config.get("class_name")
    if not class_name:
        raise ContractError(f"{config_path} must set global_config.class_name")
    game_class = load_class_from_string(class_name, base=BaseGame)
    default_seed = global_config.get("default_seed")
    accepts_seed = "seed" in inspect.signature(game_class.from_config).parameters

    games = []
    for variant, variant_config in (config.get("games") or {}).items():
        params = dict(variant_config.get("config", {}))
        if accepts_seed and default_seed is not None:
            params.setdefault("seed", default_seed)
        games.append(
            {
                "name": variant,
                "game": game_class.from_config(**params),
                "weight": float(variant_config.get("weight", 1.0)),
                "config": params,
            }
        )
    return games


def load_game_from_config(config_path: str, variant: Optional[str] = None) -> BaseGame:
    """One variant of a family config; the first listed when ``variant`` is None."""
    games = load_games_from_config(config_path)
    if not games:
        raise ContractError(f"{config_path} lists no game variants")
    if variant is None:
        return games[0]["game"]
    for entry in games:
        if entry["name"] == variant:
            return entry["game"]
    raise ContractError(f"variant {variant!r} not in {config_path}; known: {[g['name'] for g in games]}")
