from .beach_mountain_game import BEACH, BEACH_TYPE, MOUNTAIN, MOUNTAIN_TYPE, BeachMountainGame

__all__ = ["BEACH", "BEACH_TYPE", "MOUNTAIN", "MOUNTAIN_TYPE", "BeachMountainGame"]
