"""Entanglement-assisted network coding on higher-order butterfly networks."""
__version__ = "0.1.0"
