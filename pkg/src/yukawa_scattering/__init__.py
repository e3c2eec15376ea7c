"""Yukawa-Hartree scattering: forward maps and parameter reconstruction."""

from .grid import (BoundaryError, ComplexField, Grid3, Multiplier, RepresentationError,
                   apply_multiplier, dilate, fft_forward, fft_inverse, inner, load_field, norm,
                   save_field, spacetime_norm, translate)
from .models import ModelParams, default_model
from .profiles import Gaussian, RingBump
from .yukawa import YukawaParams

__version__ = "0.1.0"
