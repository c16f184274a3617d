#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# keyword_ctr documentation build configuration file.
#
# Only the values that differ from the sphinx-quickstart defaults are set.

import sys
import os

sys.path.insert(0, os.path.abspath('../..'))

from keyword_ctr import __version__  # noqa: E402

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.mathjax',
]

# numpy and scipy are not needed to read the API pages
autodoc_mock_imports = ['numpy', 'scipy']
autodoc_member_order = 'bysource'

source_suffix = '.rst'
master_doc = 'index'

project = u'keyword_ctr'
copyright = u'2022, keyword_ctr developers'
author = u'keyword_ctr developers'

version = __version__
release = __version__

language = 'en'
exclude_patterns = []
pygments_style = 'sphinx'
todo_include_todos = False

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
htmlhelp_basename = 'keyword_ctrdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_elements = {
}

latex_documents = [
    (master_doc, 'keyword_ctr.tex', u'keyword\\_ctr Documentation',
     author, 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'kctr', u'keyword_ctr Documentation',
     [author], 1)
]
