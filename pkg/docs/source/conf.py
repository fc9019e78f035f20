# -*- coding: utf-8 -*-
#
# Configuration file for the Sphinx documentation builder.


# -- Project information -----------------------------------------------------

project = 'adaptivediff'
copyright = '2024, adaptivediff developers'
author = 'adaptivediff developers'

version = 'v0.1'
release = '0.1.0'


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
]

autodoc_mock_imports = ['matplotlib', 'numpy', 'scipy', 'tqdm']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
exclude_patterns = []
pygments_style = 'sphinx'


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []
htmlhelp_basename = 'adaptivediffdoc'
