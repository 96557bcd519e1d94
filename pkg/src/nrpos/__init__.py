"""nrpos: 5G NR positioning baseband toolkit.

Q1.15 fixed-point sample handling, positioning reference signals (SRS, PRS,
PRACH), OFDM resource grids, link-budget metrics, comb channel estimation with
ToA/RTT ranging, a deterministic channel simulator, and binary trace/dataset
file formats, glued together by the ``nrpos`` command line tool.
"""

__version__ = "0.1.0"
