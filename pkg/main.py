#!/usr/bin/env python3
"""
lobfeat - Report service launcher
"""

import logging
import os

import uvicorn

from lobfeat.config import get_config
from lobfeat.server import create_app

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

config = get_config(os.getenv("LOBFEAT_CONFIG"))
app = create_app(config)

if __name__ == "__main__":
    host = os.getenv("HOST", config.server.host)
    port = int(os.getenv("PORT", str(config.server.port)))

    logger.info("Starting lobfeat report service...")
    logger.info(f"Server: {host}:{port}")
    logger.info(f"Runs directory: {config.server.runs_dir}")

    try:
        uvicorn.run(
            "main:app",
            host=host,
            port=port,
            log_level=config.server.log_level,
            reload=False,
            workers=1
        )
    except Exception as e:
        logger.error(f"Failed to start server: {e}")
        raise
