# --- __init__.py ---
"""Non-Hermitian biphoton simulator: eigenenergies, susceptibilities, correlation waveforms and fits."""

__version__ = "0.1.0"
