# -*- coding: utf-8 -*-
#
# aslchamp documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import sys
import os

# If extensions (or modules to document with autodoc) are in another
# directory, add these directories to sys.path here.
sys.path.insert(0, os.path.abspath('..'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
    'sphinx.ext.todo',
    'sphinx.ext.mathjax',
    'sphinx.ext.ifconfig',
]

numfig = True

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

# General information about the project.
project = 'aslchamp'
copyright = '2026, Ryan Nelson'

# The short X.Y version and the full version.
version = '0.1'
release = '0.1.0'

exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'haiku'
html_title = 'aslchamp Documentation'
html_short_title = 'aslchamp'
htmlhelp_basename = 'aslchampdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_elements = {
}

latex_documents = [
  ('index', 'aslchamp.tex', 'aslchamp Documentation',
   'Ryan Nelson', 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'aslchamp', 'aslchamp Documentation',
     ['Ryan Nelson'], 1)
]

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
  ('index', 'aslchamp', 'aslchamp Documentation',
   'Ryan Nelson', 'aslchamp',
   'Synthetic ASL sign data, recognition and lessons.', 'Miscellaneous'),
]
