#!/usr/bin/env python3
"""
Serve a victim over HTTP.

Usage:
    python run_server.py

Reads STEALER_VICTIM_CONFIG (a victims YAML, optionally "path#preset"),
STEALER_BIND (host:port) and STEALER_MODE (API mode) from the environment
or a .env file. Press Ctrl+C to stop gracefully.
"""

import os
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

# Load environment variables from .env file
from dotenv import load_dotenv
load_dotenv()

from api.server import ServerHandle
from src.models.oracle import ApiConfig, ApiMode
from src.victim import build_victim
from src.victim.config import DEFAULT_VICTIMS_PATH, load_victim_spec


def main():
    target = os.environ.get("STEALER_VICTIM_CONFIG", f"{DEFAULT_VICTIMS_PATH}#logit_recovery")
    path, _, preset = target.partition("#")
    spec = load_victim_spec(path, preset or None)
    mode = ApiMode(os.environ.get("STEALER_MODE", ApiMode.TOPK_LOGPROBS.value))
    config = ApiConfig(mode=mode, k=1 if mode == ApiMode.TOP1_BINARY_BIAS else 5)
    bind = os.environ.get("STEALER_BIND", "127.0.0.1:8000")

    handle = ServerHandle(build_victim(spec), config, bind).bind()
    print(f"Serving {spec.name} on {handle.endpoint} ({mode.value})")
    print("Press Ctrl+C to stop\n")
    handle.serve_forever()


if __name__ == "__main__":
    main()
