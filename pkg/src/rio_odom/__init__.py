"""Dense radar-inertial odometry: phase-correlation scan registration fused with IMU data."""

__version__ = "0.1.0"
