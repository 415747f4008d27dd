class FormatError(Exception):
    """Malformed or incompatible data: bad magic, truncation, parse failure,
    or a checkpoint/feature file that does not fit the receiving model."""
