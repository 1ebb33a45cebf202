# example_client.py
"""
Example client script for the superres-moments MCP server.
This demonstrates how to connect to the server and call its tools programmatically.
"""

import asyncio
import math
import sys
from mcp import ClientSession, StdioServerParameters
from mcp.client.stdio import stdio_client


async def main():
    # Create server parameters for stdio connection
    server_params = StdioServerParameters(
        command=sys.executable,  # Current Python executable
        args=["run_server.py"],  # Run the server script
    )

    print("Connecting to superres-moments MCP server...")
    async with stdio_client(server_params) as (read, write):
        async with ClientSession(read, write) as session:
            await session.initialize()

            print("\nAvailable tools:")
            tools = await session.list_tools()
            for tool in getattr(tools, "tools", tools):
                print(f"- {tool.name}: {tool.description}")

            # Ideal Q=2 demultiplexing at x = d/2w = 0.3
            print("\nSensitivity at d = 0.6 w, theta = pi/4, N = 1.5...")
            point = await session.call_tool(
                "sensitivity_at_point",
                arguments={"d": 0.6, "theta": math.pi / 4, "n_mean": 1.5, "q_max": 2},
            )
            print(getattr(point, "content", point))

            # Same point with all three noise sources
            print("\nWith misalignment, crosstalk and dark counts...")
            noisy = await session.call_tool(
                "sensitivity_at_point",
                arguments={
                    "d": 0.6, "theta": math.pi / 4, "n_mean": 1.5, "q_max": 2,
                    "d_s": 0.02, "theta_s": math.pi / 4,
                    "crosstalk_power": 0.0017, "dark_level": 0.003,
                },
            )
            print(getattr(noisy, "content", noisy))

            # Ideal d_min scaling over three decades of photon number
            print("\nMinimal resolvable distance (ideal)...")
            dmin = await session.call_tool(
                "minimal_resolvable_distance",
                arguments={"config": {
                    "scene": {"theta": math.pi / 4, "n_mean": 1.0},
                    "basis": {"q_max": 2},
                    "dmin": {"sweep": "n_mean", "values": [10.0, 100.0, 1000.0],
                             "closed_forms": ["ideal"]},
                }},
            )
            print(getattr(dmin, "content", dmin))


if __name__ == "__main__":
    asyncio.run(main())
