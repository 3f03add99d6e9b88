"""Scanner-source attribution toolkit: patch CNN, majority voting,
reliability maps, synthetic scanner simulation and forgery synthesis."""

__version__ = "0.1.0"
