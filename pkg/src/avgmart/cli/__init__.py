"""The ``avgmart`` command line interface."""
