"""Data-block unitary OFDM (DBU-OFDM) simulator.

A learned unitary transform, built from Householder reflections and a
diagonal phase, precodes the data subcarriers of an OFDM frame.  The
package covers the resource grid, modulation chain, channel models,
equalization, delay-Doppler sensing, end-to-end training, a bit-accurate
fixed-point datapath and Monte Carlo evaluation.
"""

from .grid import CONFIG_1, CONFIG_2, CONFIG_3, GridConfig, ResourceGrid, build_grid
from .kernels import BACKEND
from .unitary import HouseholderParams, UdataApplier, UnitaryTransform, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CONFIG_1", "CONFIG_2", "CONFIG_3", "GridConfig", "HouseholderParams",
    "ResourceGrid", "UdataApplier", "UnitaryTransform", "build_grid", "load_model", "save_model",
]
