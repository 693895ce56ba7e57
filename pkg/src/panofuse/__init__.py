"""Panoptic fusion of semantic logits, detections and center offsets."""

__version__ = "0.1.0"
