"""twinlane: desk-scale vehicle autonomy loop with a sim-to-real gap harness."""

__version__ = "0.1.0"
