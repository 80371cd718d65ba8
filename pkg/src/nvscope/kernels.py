"""Backend selection for the field accumulation kernel.

Prefers the compiled extension; falls back to the numpy implementation
when the extension was not built or NVSCOPE_NO_EXT is set. Both
backends are bit-identical by construction, so the choice only affects
speed.
"""

import os

USING_EXTENSION = False

if not os.environ.get("NVSCOPE_NO_EXT"):
    try:
        from nvscope._fieldkern import field_accumulate
        USING_EXTENSION = True
    except ImportError:
        from nvscope._fieldkern_py import field_accumulate
else:
    from nvscope._fieldkern_py import field_accumulate

__all__ = ["field_accumulate", "USING_EXTENSION"]
