"""gap-afem module."""
__version__ = '2026.10.19.1'
