"""File formats, metrics and the command-line tool."""
