"""Road-asset inspection toolkit.

Ingests dashcam frames plus external detector output, extracts sign/damage
crops, trains and runs a binary damaged/undamaged sign classifier, evaluates
detectors (IoU/mAP), geolocates findings from GPS tracks, and serves a human
annotation loop for building the labeled crop dataset.
"""

__version__ = "0.1.0"
