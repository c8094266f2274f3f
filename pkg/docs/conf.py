# -*- coding: utf-8 -*-
#
# rsvq_codec documentation build configuration file, created by
# sphinx-quickstart.
#
# Only the values that differ from the Sphinx defaults are set here.

import os
import sys

# Make the src package importable for autodoc
sys.path.insert(0, os.path.abspath(".."))

# -- General configuration -----------------------------------------------------

extensions = ["sphinx.ext.autodoc", "sphinx.ext.napoleon"]
autodoc_mock_imports = ["soundfile", "sklearn", "hydra", "omegaconf", "matplotlib"]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = u"rsvq_codec"
copyright = u"2021, DTU"
version = "0.1"
release = "0.1.0"

exclude_patterns = ["_build"]
pygments_style = "sphinx"

# -- Options for HTML output ---------------------------------------------------

html_theme = "default"
html_static_path = ["_static"]
htmlhelp_basename = "rsvq_codecdoc"

# -- Options for LaTeX output --------------------------------------------------

latex_documents = [
    (
        "index",
        "rsvq_codec.tex",
        u"rsvq_codec Documentation",
        u"DTU",
        "manual",
    ),
]

# -- Options for manual page output --------------------------------------------

man_pages = [
    ("index", "rsvq_codec", u"rsvq_codec Documentation", [u"DTU"], 1)
]

# -- Options for Texinfo output ------------------------------------------------

texinfo_documents = [
    (
        "index",
        "rsvq_codec",
        u"rsvq_codec Documentation",
        u"DTU",
        "rsvq_codec",
        "A streamable MDCT neural audio codec with residual scalar-vector quantization",
        "Miscellaneous",
    ),
]
