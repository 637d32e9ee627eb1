"""RIS-aided sensing and communication with Rydberg atomic receivers."""
__version__ = "0.1.0"
