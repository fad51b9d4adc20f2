"""Python surface of the split-inference toolchain.

Everything is implemented in the compiled extension; this package only
re-exports it. In a development tree the extension may sit on sys.path as a
bare module instead of living inside the package.
"""

try:
    from ._shadownet import *  # noqa: F401,F403
    from ._shadownet import __doc__  # noqa: F401
except ImportError:  # pragma: no cover - dev-tree fallback
    from _shadownet import *  # noqa: F401,F403
    from _shadownet import __doc__  # noqa: F401
