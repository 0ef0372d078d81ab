"""Photon-pair two-way clock synchronization and tomography toolkit.

The compiled core lives in ``chronon._chronon``; everything it exports is
re-exported here.
"""

from ._chronon import *  # noqa: F401,F403
from ._chronon import __version__  # noqa: F401
