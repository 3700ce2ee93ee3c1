"""pracsim: command-level DDR5 simulator and analysis toolkit for
activation-counting RowHammer mitigations (PRAC, RFM, PRFM) and the
controller-side reference mechanisms they are compared against.
"""

__version__ = "0.1.0"
