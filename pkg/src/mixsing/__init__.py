"""
Mixture Singularity Toolkit: singularity structure and convergence rates of
finite mixtures of skew-normal, Gaussian and Gamma kernels.
"""
from mixsing.constants import AppInfo
from mixsing.mixsing_cmd import main

__version__ = AppInfo.version
__all__ = ["main", "__version__"]
