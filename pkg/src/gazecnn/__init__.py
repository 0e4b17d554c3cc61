"""Webcam gaze-direction classification: cascade detection, eye-pair
preprocessing, a small LeNet-style CNN trained from scratch, and the
experiment and benchmark tooling around them."""

__version__ = "0.1.0"
