# ruff: noqa

# Configuration file for the Sphinx documentation builder.
#
# For the full list of built-in configuration values, see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath("src"))


# -----------------------------------------------------------------------------
# Project information
# https://www.sphinx-doc.org/en/master/usage/configuration.html#project-information
# -----------------------------------------------------------------------------

author = "avgmart developers"
copyright = "2024, avgmart developers"
project = "avgmart"


# -----------------------------------------------------------------------------
# General configuration
# https://www.sphinx-doc.org/en/master/usage/configuration.html#general-configuration
# -----------------------------------------------------------------------------

extensions = ["sphinx.ext.autodoc", "sphinx.ext.autosummary"]

# Preserve authored syntax for defaults
autodoc_preserve_defaults = True

autodoc_default_flags = {
    "inherited-members": True,
    "show-inheritance": True,
    "special-members": ("__call__", "__len__"),
}

autodoc_member_order = "groupwise"

autosummary_generate = True

exclude_patterns = []

# Be strict about any broken references
nitpicky = True

nitpick_ignore = [
    ("py:class", "ArrayLike"),  # numpy.typing alias
    ("py:class", "FloatArray"),  # type alias only available when type checking
    ("py:class", "NDArray"),  # numpy.typing alias
    ("py:class", "DriftFn"),  # type alias
    ("py:class", "DiffusionFn"),  # type alias
    ("py:class", "OffsetFn"),  # type alias
    ("py:class", "WeightFn"),  # type alias
    ("py:class", "ExperimentFactory"),  # type alias
    ("py:class", "ResultWriterFactory"),  # type alias
    ("py:class", "Series"),  # type alias
    ("py:class", "T"),  # type parameter
    ("py:class", "V"),  # type parameter
    ("py:class", "avgmart.app._config.Config"),  # private type
]

root_doc = "index"


# -----------------------------------------------------------------------------
# Options for HTML output
# https://www.sphinx-doc.org/en/master/usage/configuration.html#options-for-html-output
# -----------------------------------------------------------------------------

html_theme = "furo"

html_theme_options = {
    "light_css_variables": {
        "color-brand-primary": "#2a7f62",
        "color-brand-content": "#2a7f62",
    },
    "dark_css_variables": {
        "color-brand-primary": "#5cc8a0",
        "color-brand-content": "#5cc8a0",
    },
}


# -----------------------------------------------------------------------------
# Include Python intersphinx mapping to prevent failures
# -----------------------------------------------------------------------------

extensions += ["sphinx.ext.intersphinx"]
intersphinx_mapping = {
    "attrs": ("https://www.attrs.org/en/stable/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "python": ("https://docs.python.org/3", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}


# -----------------------------------------------------------------------------
# Support tooltips on references
# -----------------------------------------------------------------------------

extensions += ["hoverxref.extension"]
hoverxref_auto_ref = True
hoverxref_intersphinx = ["attrs", "numpy", "python", "scipy"]


# -----------------------------------------------------------------------------
# Add support for nice Not Found 404 pages
# -----------------------------------------------------------------------------

extensions += ["notfound.extension"]
