"""Co-robotic mammography ultrasound: calibration, registration and scan simulation."""

__version__ = "0.1.0"
