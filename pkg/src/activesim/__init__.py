"""Active stereovision depth sensor simulator.

Renders infrared stereo pairs of a PBR scene lit by a textured dot projector,
corrupts them with a speckle/thermal noise model and recovers depth with a
census + semi-global matching engine.
"""

from activesim import _threads  # noqa: F401  (configures numba before any kernel import)
from activesim._threads import set_threads, get_threads

__version__ = "0.1.0"

__all__ = ["set_threads", "get_threads", "__version__"]
