"""Run the service on a real socket: python -m cpschain.service"""

import os

import uvicorn

from .app import create_app

if __name__ == "__main__":
    uvicorn.run(
        create_app(),
        host=os.environ.get("CPSCHAIN_HOST", "127.0.0.1"),
        port=int(os.environ.get("CPSCHAIN_PORT", "8421")),
        log_level="info",
    )
