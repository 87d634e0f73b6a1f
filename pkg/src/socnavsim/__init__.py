"""2D laser-scan navigation simulator with safety-aware reward shaping.

Subpackage map: geometry primitives, lidar simulation and motion
features, ORCA crowds, the episode engine, reward terms, from-scratch
networks and DDPG training, scripted baselines, and evaluation suites.
"""

__version__ = "0.1.0"
