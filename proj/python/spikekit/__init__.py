"""Spiking-network learning-rules workbench: python bindings."""

try:
    from spikekit._core import *  # noqa: F401,F403  (installed wheel layout)
    from spikekit import _core as core  # noqa: F401
except ImportError:  # build-tree layout: _core.so next to this package on PYTHONPATH
    from _core import *  # noqa: F401,F403
    import _core as core  # noqa: F401

__all__ = [n for n in dir(core) if not n.startswith("_")]
