"""Desk-scale differentiable 3D reconstruction.

An SDF rendered volumetrically, with appearance split into a camera-view
radiance field and a reflected-view radiance field blended per pixel by a
learned weight field. Pure numpy with numba-accelerated hot kernels
(set BLENDSDF_BACKEND=numpy to force the fallback path).
"""

__version__ = "0.1.0"
