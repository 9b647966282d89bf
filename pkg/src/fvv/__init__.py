"""Desk-scale free-viewpoint video pipeline.

Synthetic multiview-plus-depth capture, depth correction and background
removal, 12-bit depth packing over YUV420, MTU-bounded packetization over a
simulated network, and layered depth-image-based rendering of user-steered
virtual views.
"""

__version__ = "0.1.0"
