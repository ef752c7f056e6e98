"""Branching Brownian motion with a macroscopically time-varying diffusivity.

Subpackages: profiles (sigma families and the variance clock), variational
(front speed and optimal paths), corridor (strip survival oracles and
estimators), bbm (the event-driven simulator), experiments (ensembles, the
correction curve and its fitted laws), cli (the `bbmfront` executable).
"""

__version__ = "0.1.0"

from . import profiles, variational  # noqa: F401
