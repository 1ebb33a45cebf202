# run_server.py
"""
Run script for the superres-moments MCP server.
This script makes it easier to run the server from the command line.
"""

from superres_moments.server import mcp

if __name__ == "__main__":
    print("Starting superres-moments MCP server...")
    mcp.run()
    print("superres-moments MCP server stopped.")
