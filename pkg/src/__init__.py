# Feature-field human mesh recovery
__version__ = "1.0.0"
