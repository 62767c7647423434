"""Backend-routed entry points for the hot kernels.

Callers import from here; each call routes to the numba or numpy
implementation according to backend.active_backend().
"""

from . import backend
from . import kernels_numpy as _np_impl

if backend.have_numba():
    from . import kernels_numba as _nb_impl
else:  # numba missing: both routes resolve to the reference implementation
    _nb_impl = _np_impl

env_color = _np_impl.env_color  # cheap closed form; no numba variant needed
scene_sdf = _np_impl.scene_sdf
prim_sdf = _np_impl.prim_sdf
prim_normal = _np_impl.prim_normal

grid_fwd = backend.dispatch(_nb_impl.grid_fwd, _np_impl.grid_fwd)
grid_fwd_jac = backend.dispatch(_nb_impl.grid_fwd_jac, _np_impl.grid_fwd_jac)
grid_bwd_table = backend.dispatch(_nb_impl.grid_bwd_table, _np_impl.grid_bwd_table)
grid_bwd_u = backend.dispatch(_nb_impl.grid_bwd_u, _np_impl.grid_bwd_u)
trace = backend.dispatch(_nb_impl.trace, _np_impl.trace)

HASH_PRIMES = _np_impl.HASH_PRIMES
PRIM_SPHERE = _np_impl.PRIM_SPHERE
PRIM_BOX = _np_impl.PRIM_BOX
PRIM_PLANE = _np_impl.PRIM_PLANE
