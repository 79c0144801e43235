"""Security-configuration survey scanner for OPC UA servers."""

__version__ = "0.1.0"
