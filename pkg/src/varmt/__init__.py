"""varmt: adapt a source-to-standard translation model to a related
low-resource language variety using only monolingual variety text."""

__version__ = "0.1.0"
