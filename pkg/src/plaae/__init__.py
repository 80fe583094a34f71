"""PLAAE: non-autoregressive adversarial auto-encoder for packet loss concealment."""

__version__ = "0.1.0"

SAMPLE_RATE = 16000
PACKET_LENGTH = 320
HOP_LENGTH = 160
