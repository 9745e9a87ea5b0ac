"""Cataract severity grading from retinal images.

Widened-Haar detail maps, annular ring features and a three-stage cascade
of majority-voting MLPs. See ``retina-grade --help`` for the command line.
"""

__version__ = "0.1.0"
