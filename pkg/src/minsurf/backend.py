"""Kernel backend selection.

The batch kernels exist twice: a Cython extension (``minsurf._kernels``) and a
pure-numpy fallback (``minsurf._kernels_np``). The compiled one is used when
available; set ``MINSURF_KERNELS=python`` to force the fallback, or
``MINSURF_KERNELS=c`` to fail loudly if the extension is missing.
"""

import os

_choice = os.environ.get("MINSURF_KERNELS", "auto").lower()

if _choice == "python":
    from . import _kernels_np as kernels

    KERNEL_BACKEND = "python"
elif _choice == "c":
    from . import _kernels as kernels  # type: ignore[no-redef]

    KERNEL_BACKEND = "c"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        KERNEL_BACKEND = "c"
    except ImportError:
        from . import _kernels_np as kernels  # type: ignore[no-redef]

        KERNEL_BACKEND = "python"

area_batch = kernels.area_batch
area_gradient_batch = kernels.area_gradient_batch
inner_stress_batch = kernels.inner_stress_batch
minor_max_batch = kernels.minor_max_batch
