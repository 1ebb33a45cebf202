# server.py
from mcp.server.fastmcp import FastMCP
# Import our command registration functions
from superres_moments.commands import resolution, sweeps, validation
from superres_moments.config import setup_logging

setup_logging()

# 1. Create the MCP server instance; numpy and scipy do all the numerics.
mcp = FastMCP("SuperresMoments", dependencies=["numpy", "scipy"])

# 2. Register commands from the command modules.
sweeps.register_sweep_commands(mcp)
resolution.register_resolution_commands(mcp)
validation.register_validation_commands(mcp)

# 3. Start the MCP server when this script is executed.
if __name__ == "__main__":
    # Listens for MCP client connections via STDIO or SSE.
    mcp.run()
