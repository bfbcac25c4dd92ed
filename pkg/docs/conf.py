# Sphinx configuration for the llsp documentation.
# The API pages under docs/api are regenerated by sphinx-apidoc on every build.

import os
import shutil
import sys

__location__ = os.path.dirname(__file__)
sys.path.insert(0, os.path.join(__location__, "../src"))

# -- API pages ---------------------------------------------------------------

from sphinx.ext import apidoc

output_dir = os.path.join(__location__, "api")
module_dir = os.path.join(__location__, "../src/llsp")
shutil.rmtree(output_dir, ignore_errors=True)
apidoc.main(["--implicit-namespaces", "-f", "-o", output_dir, module_dir])

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
]

source_suffix = ".rst"
master_doc = "index"

project = "llsp"
copyright = "2023, David M. Rogers"

try:
    from llsp import __version__ as version
except ImportError:
    version = ""
if not version or version.lower() == "unknown":
    version = os.getenv("READTHEDOCS_VERSION", "unknown")
release = version

exclude_patterns = ["_build", "Thumbs.db", ".DS_Store", ".venv"]
pygments_style = "sphinx"

autodoc_member_order = "bysource"

# -- HTML output -------------------------------------------------------------

html_theme = "alabaster"
html_theme_options = {
    "sidebar_width": "300px",
    "page_width": "1200px"
}
htmlhelp_basename = "llsp-doc"

# -- External links ----------------------------------------------------------

python_version = ".".join(map(str, sys.version_info[0:2]))
intersphinx_mapping = {
    "python": ("https://docs.python.org/" + python_version, None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/reference", None),
    "pandas": ("https://pandas.pydata.org/pandas-docs/stable", None),
    "pydantic": ("https://docs.pydantic.dev/latest", None),
}

print(f"loading configurations for {project} {version} ...", file=sys.stderr)
