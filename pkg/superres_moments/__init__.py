"""Method-of-moments sensitivity and resolution limits for two-source superresolution"""

__version__ = "0.1.0"
