"""Backend selection: numba JIT kernels with a pure-NumPy fallback.

The hot loops (billiard stepping, return-time collection, chain stepping)
are written once in nopython-compatible style and decorated with ``njit``
when numba is importable.  Setting the environment variable
``SDLAB_DISABLE_NUMBA=1`` forces the fallback path: the same code runs
under an identity decorator (slow but identical output), and batch
drivers switch to vectorized NumPy implementations where one exists.
``python -m sdlab.benchmark`` compares the two paths.

Randomness is counter-based (splitmix64) so that a scalar loop and a
vectorized array implementation consume exactly the same stream: draw i
of the stream with seed s is ``mix64(s + (i+1)*GAMMA)`` and replica r of
master seed s uses seed ``mix64(s + (r+1)*GAMMA)``.  The python-int,
jitted-scalar and uint64-ndarray implementations below are bit-identical;
a unit test pins that.
"""

import math
import os

import numpy as np

_MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

FORCE_FALLBACK = os.environ.get("SDLAB_DISABLE_NUMBA", "").strip() not in ("", "0", "false", "no")

try:
    if FORCE_FALLBACK:
        raise ImportError("fallback forced by SDLAB_DISABLE_NUMBA")
    from numba import njit  # noqa: F401
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # identity decorator, mirrors numba's call signatures
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def mix64(z):
    """splitmix64 finalizer on python ints (exact 64-bit wraparound)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def replica_seed(master, r):
    """Derived seed for replica r: mix64(master + (r+1)*GAMMA)."""
    return mix64((int(master) + (int(r) + 1) * GAMMA) & _MASK)


def stream_u64(seed, i):
    """Draw i (0-based) of the stream with the given seed, as a python int."""
    return mix64((int(seed) + (int(i) + 1) * GAMMA) & _MASK)


def u64_to_unit(x):
    """Map a 64-bit integer to a double in [0, 1) using the top 53 bits."""
    return (int(x) >> 11) * 2.0 ** -53


# typed constants closed over by the jitted helpers
_G64 = np.uint64(GAMMA)
_M164 = np.uint64(_MIX1)
_M264 = np.uint64(_MIX2)
_ONE = np.uint64(1)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO_NEG53 = 2.0 ** -53

if HAVE_NUMBA:

    @njit(cache=True)
    def unit_jit(seed, i):
        """Uniform draw i in [0,1) of the stream with seed (uint64 in)."""
        z = seed + (np.uint64(i) + _ONE) * _G64
        z = (z ^ (z >> _S30)) * _M164
        z = (z ^ (z >> _S27)) * _M264
        z = z ^ (z >> _S31)
        return np.float64(z >> _S11) * _TWO_NEG53

else:

    def unit_jit(seed, i):
        return u64_to_unit(stream_u64(int(seed), int(i)))


def unit_vec(seed_arr, counter_arr):
    """Uniform draws, one per (seed, counter) pair; uint64 ndarrays in."""
    z = seed_arr + (counter_arr + _ONE) * _G64
    z = (z ^ (z >> _S30)) * _M164
    z = (z ^ (z >> _S27)) * _M264
    z = z ^ (z >> _S31)
    return (z >> _S11).astype(np.float64) * _TWO_NEG53


# LLVM folds adjacent sin(x) + cos(x) of the same argument into a single
# libm sincos call, whose last-ulp rounding differs from the separate
# sin and cos routines for some arguments; a hyperbolic orbit amplifies
# one ulp to O(1) within ~40 collisions, so compiled and interpreted
# trajectories would part ways.  Routing the compiled calls through
# opaque symbols bound to the scalar libm entry points blocks the fold
# and keeps both paths on the identical routines that math.sin/math.cos
# call.  sin_exact/cos_exact must only be called with float64 from
# inside jitted kernels (or from plain python on the fallback path).
if HAVE_NUMBA:
    import ctypes

    from llvmlite import binding as _binding
    from llvmlite import ir as _ir
    from numba.core import cgutils as _cgutils
    from numba.core import types as _nb_types
    from numba.extending import intrinsic as _intrinsic

    _proc = ctypes.CDLL(None)
    _binding.add_symbol("sdlab_libm_sin",
                        ctypes.cast(_proc.sin, ctypes.c_void_p).value)
    _binding.add_symbol("sdlab_libm_cos",
                        ctypes.cast(_proc.cos, ctypes.c_void_p).value)

    def _opaque_unary(symbol):
        @_intrinsic
        def op(typingctx, x):
            if x != _nb_types.float64:
                return None
            sig = _nb_types.float64(_nb_types.float64)

            def codegen(context, builder, signature, args):
                fnty = _ir.FunctionType(_ir.DoubleType(), [_ir.DoubleType()])
                fn = _cgutils.get_or_insert_function(builder.module, fnty,
                                                     symbol)
                return builder.call(fn, args)

            return sig, codegen

        return op

    sin_exact = _opaque_unary("sdlab_libm_sin")
    cos_exact = _opaque_unary("sdlab_libm_cos")
else:
    sin_exact = math.sin
    cos_exact = math.cos
