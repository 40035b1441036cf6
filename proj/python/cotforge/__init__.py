"""Python surface of the cotforge core.

The heavy lifting lives in the _cotforge extension module; this package
re-exports it. When running against a plain CMake build tree, point
PYTHONPATH at the directory holding the built _cotforge module instead.
"""

try:
    from cotforge._cotforge import *  # noqa: F401,F403
    from cotforge._cotforge import __version__  # noqa: F401
except ImportError:  # build-tree layout: module next to the package on sys.path
    from _cotforge import *  # noqa: F401,F403
    from _cotforge import __version__  # noqa: F401
