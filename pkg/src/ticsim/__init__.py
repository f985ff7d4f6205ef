"""TICS control-system simulator."""
