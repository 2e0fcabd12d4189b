"""Session-based recommendation toolkit (python surface over the native core)."""

try:
    from ._sessionlab import *  # noqa: F401,F403
    from ._sessionlab import __version__  # noqa: F401
except ImportError:  # pragma: no cover - in-tree builds drop the module here
    from _sessionlab import *  # type: ignore # noqa: F401,F403
    from _sessionlab import __version__  # type: ignore # noqa: F401
