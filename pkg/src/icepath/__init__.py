"""Route planning for slow underwater vehicles in seasonally ice-covered seas.

Modules, in pipeline order: ``env_data`` (gridded current/ice years),
``mesh`` (monthly quadtree layers), ``transit`` (in-cell and crossing times),
``planner`` (layer routing and the path-book), ``composer`` (multi-month
journeys), ``simulator`` (daily-ice replay and metrics) and ``cli``.
"""

__version__ = "0.1.0"
