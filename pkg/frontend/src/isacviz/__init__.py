"""Render engine-emitted range-Doppler / spectrogram records and tail live
node status over the control socket."""

__version__ = "0.1.0"
