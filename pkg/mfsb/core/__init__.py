"""
Core Package
Autograd, attention, prompts, encoders, fusion, losses, data, metrics and training

# Core modules are imported directly where needed
# to keep the import graph acyclic
"""
