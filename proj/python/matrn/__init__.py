"""Multi-modal scene-text recognizer bindings.

The compiled extension lives at ``matrn._core``. When the package is not
installed (e.g. working from a plain CMake build tree), set the environment
variable ``MATRN_PYMODULE_DIR`` to the directory containing the built
``_core`` module before importing this package.
"""

import os
import sys

try:
    from matrn._core import *  # noqa: F401,F403
    from matrn import _core  # noqa: F401
except ImportError:  # fall back to a CMake build tree
    _dir = os.environ.get("MATRN_PYMODULE_DIR")
    if not _dir:
        raise
    sys.path.insert(0, _dir)
    import _core  # noqa: F401
    from _core import *  # noqa: F401,F403

__all__ = [
    "NUM_CLASSES",
    "PAD_INDEX",
    "Recognizer",
    "decode_indices",
    "encode_label",
    "matmul",
    "parameter_count",
    "render_word",
    "softmax",
    "word_accuracy",
]
