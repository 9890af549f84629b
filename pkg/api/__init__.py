"""FastAPI surface serving a victim behind the completions endpoint."""
