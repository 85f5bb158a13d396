"""pbrkit: participation-to-burden inequality analysis toolkit."""
__version__ = "0.1.0"
