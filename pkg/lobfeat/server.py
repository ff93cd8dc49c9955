#!/usr/bin/env python3
"""
lobfeat - Report service

FastAPI app serving the feature manifest, the run artifacts of a runs
directory, and one-shot extraction of uploaded message/book CSV pairs.
"""

import logging
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from .config import LobfeatConfig, config_hash, get_config
from .errors import LobfeatError
from .extraction import extract_features, feature_manifest, summarize
from .lob_core import parse_book_file, parse_message_file
from .storage import read_artifact

logger = logging.getLogger(__name__)

VERSION = "1.0.0"


class ServiceStats:
    """Request counters shared by the handlers"""

    def __init__(self):
        self._lock = threading.Lock()
        self.stats = {
            "total_requests": 0,
            "failed_requests": 0,
            "extractions": 0,
            "samples_extracted": 0,
        }

    def record(self, failed: bool = False, samples: Optional[int] = None):
        with self._lock:
            self.stats["total_requests"] += 1
            if failed:
                self.stats["failed_requests"] += 1
            if samples is not None:
                self.stats["extractions"] += 1
                self.stats["samples_extracted"] += samples

    def get_stats(self) -> Dict:
        with self._lock:
            return self.stats.copy()


def _run_summary(path: Path) -> dict:
    document = read_artifact(path)
    return {
        "name": path.stem,
        "kind": document["kind"],
        "config_hash": document.get("config_hash", ""),
        "rows": len(document.get("rows", [])),
        "failed_folds": len(document.get("failed_folds", [])),
    }


def create_app(config: Optional[LobfeatConfig] = None) -> FastAPI:
    config = config or get_config()
    runs_dir = Path(config.server.runs_dir)
    stats = ServiceStats()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.start_time = time.time()
        logger.info(f"lobfeat report service starting, runs directory {runs_dir}")
        yield
        logger.info("lobfeat report service shutting down")

    app = FastAPI(
        title="lobfeat",
        description="Limit order book features, rankings and classification reports",
        version=VERSION,
        lifespan=lifespan,
    )
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_credentials=True,
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.stats = stats

    @app.get("/")
    async def root():
        stats.record()
        return {
            "message": "lobfeat report service",
            "version": VERSION,
            "config_hash": config_hash(config),
            "endpoints": {
                "health": "/health",
                "stats": "/stats",
                "manifest": "/manifest",
                "runs": "/runs",
                "extract": "/extract",
            },
        }

    @app.get("/health")
    async def health_check():
        stats.record()
        started = getattr(app.state, "start_time", None)
        return {
            "status": "healthy",
            "timestamp": time.time(),
            "uptime": time.time() - started if started else 0,
            "runs_dir": str(runs_dir),
            "runs_dir_exists": runs_dir.is_dir(),
        }

    @app.get("/stats")
    async def get_stats():
        return {"timestamp": time.time(), "requests": stats.get_stats(), "config": asdict(config)}

    @app.get("/manifest")
    async def manifest():
        stats.record()
        features = feature_manifest(config)
        return {"total_features": len(features), "features": [f.to_dict() for f in features]}

    @app.get("/runs")
    async def list_runs():
        stats.record()
        if not runs_dir.is_dir():
            return {"runs": []}
        runs = []
        for path in sorted(runs_dir.glob("*.json")):
            try:
                runs.append(_run_summary(path))
            except LobfeatError as e:
                logger.warning(f"Skipping {path}: {e}")
        return {"runs": runs}

    @app.get("/runs/{name}")
    async def get_run(name: str):
        path = runs_dir / f"{name}.json"
        if Path(name).name != name or not path.is_file():
            stats.record(failed=True)
            raise HTTPException(status_code=404, detail=f"Run not found: {name}")
        try:
            document = read_artifact(path)
        except LobfeatError as e:
            stats.record(failed=True)
            logger.error(f"Cannot read run {name}: {e}")
            raise HTTPException(status_code=400, detail=str(e))
        stats.record()
        return document

    @app.post("/extract")
    def extract(messages: UploadFile = File(...), book: UploadFile = File(...)):
        try:
            events = parse_message_file(messages.file)
            snapshots = parse_book_file(book.file, config.book.levels)
            matrix = extract_features(events, snapshots, config)
        except LobfeatError as e:
            stats.record(failed=True)
            logger.error(f"Extraction failed for {messages.filename}/{book.filename}: {e}")
            raise HTTPException(status_code=400, detail=str(e))
        stats.record(samples=matrix.n_samples)
        return {"summary": summarize(matrix), "config_hash": config_hash(config)}

    return app
