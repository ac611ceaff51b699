"""
polyglot-qe: SQL over document, wide-column and key-value stores
"""

__version__ = "1.0.0"
__author__ = "polyglot-qe Team"
