"""Distributed blind calibration of sensor networks by output consensus.

Subpackages: :mod:`~blindcal.netgraph` (topology), :mod:`~blindcal.signals`
(signal and noise sources), :mod:`~blindcal.calib` (node update rules),
:mod:`~blindcal.spectral` (mean-dynamics oracle), :mod:`~blindcal.simharness`
(simulation and ensembles) and :mod:`~blindcal.cli`.
"""
__version__ = "0.1.0"
