"""Bundled small test networks (MATPOWER format)."""
