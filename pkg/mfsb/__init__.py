"""
mfsb
Separated inter/intra-modal fusion prompting for compositional zero-shot learning
"""

__version__ = "0.1.0"
