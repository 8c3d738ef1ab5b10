from .random_utility_game import RandomAggregativeGame, RandomTableGame

__all__ = ["RandomAggregativeGame", "RandomTableGame"]
