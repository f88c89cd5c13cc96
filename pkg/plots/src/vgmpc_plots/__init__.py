"""Static figure rendering over vgmpc experiment artifacts.

This package consumes only the documented external interfaces: episode CSVs
(``controller_track_tau<tau>_seed<k>.csv``), training-curve CSVs, and the
JSON critic checkpoint. It does not import the controller package.
"""

from .figures import plot_benchmark, plot_mismatch, plot_training

__all__ = ["plot_mismatch", "plot_training", "plot_benchmark"]
__version__ = "0.1.0"
