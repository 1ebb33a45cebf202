# superres_moments/commands/__init__.py
# Package for the run commands and their MCP tool registrations
from superres_moments.commands import resolution, sweeps, validation
