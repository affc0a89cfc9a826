"""goalsmith: edit tabletop observations into goal images with a toy
text-conditioned diffusion model, then learn pixel policies from those goals
with an example-based classifier reward."""

__version__ = "0.1.0"
