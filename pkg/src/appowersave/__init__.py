"""Access-point power saving: PHY and power models, power-save state machines,
a discrete-event WLAN simulator and the analysis studies built on them."""

__version__ = "0.1.0"
