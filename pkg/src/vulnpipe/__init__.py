"""vulnpipe: function-level vulnerability detection over code property graphs.

Pipeline: mini-C source -> AST -> CFG/CDG/DDG -> merged code property graph,
then either a Weisfeiler-Lehman kernel SVM or a receptive-field CNN decides
secure vs insecure.
"""

__version__ = "0.1.0"
