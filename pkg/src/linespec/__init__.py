"""Generalized line spectral estimation.

Recover the frequencies and amplitudes of a sparse mixture of complex
exponentials on ``[0, 1)^d`` from linear measurements ``y = A z``, by l1
minimization over a fine-grid dictionary ``A F_grid``.
"""

__version__ = "0.1.0"

from .spectral import Mixture, check_separation, frequency_indices, steering_matrix, steering_vector  # noqa: E402,F401
