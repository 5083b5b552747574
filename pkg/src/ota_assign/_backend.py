"""Select the kernel implementation at import time.

The compiled extension is used when it imports cleanly; set
``OTA_ASSIGN_PURE=1`` to force the pure-Python kernels.
"""
import os

from . import _pykernels

pure = _pykernels

if os.environ.get("OTA_ASSIGN_PURE", "") not in ("", "0"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

kernels = compiled if compiled is not None else pure
BACKEND = "compiled" if compiled is not None else "python"

pairwise_iou = kernels.pairwise_iou
nms_ordered = kernels.nms_ordered
lsap = kernels.lsap
sinkhorn_log = kernels.sinkhorn_log
