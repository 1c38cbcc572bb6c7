class ExportError(Exception):
    """Raised when an export job cannot be planned or completed."""
