"""Desk-scale, deterministic NB-IoT network simulator.

BC95-class UEs driven by AT commands talk to a simulated eNB stack backed by
a control-plane-only core. Everything runs on a shared subframe clock with
no radio hardware.
"""

__version__ = "0.1.0"
