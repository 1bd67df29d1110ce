"""Label-free multi-domain image relighting.

A content/style translation model (AdaIN-modulated U-Net, style pool with
moment matching, LSGAN training) plus a shift-decomposition enhancer for
high-resolution outputs, with DIPD / IS / CIS evaluation metrics.
"""

from .config import Config, desk_scale, load_config, save_config

__all__ = ["Config", "desk_scale", "load_config", "save_config"]

__version__ = "0.1.0"
