"""``mockserver --config FILE``: run one fixture until interrupted."""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from uasurvey.mock.config import ConfigError, FixtureConfig
from uasurvey.mock.server import BindFailure, serve


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="mockserver", description="Configurable OPC UA fixture server")
    p.add_argument("--config", required=True, help="fixture JSON file")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4840)
    p.add_argument("--log", action="store_true", help="print the service log on exit")
    args = p.parse_args(argv)
    try:
        config = FixtureConfig.load(args.config)
    except (OSError, ValueError, TypeError, ConfigError) as exc:
        print(f"mockserver: bad config: {exc}", file=sys.stderr)
        return 2
    try:
        server = serve(config, args.host, args.port)
    except BindFailure as exc:
        print(f"mockserver: {exc}", file=sys.stderr)
        return 1
    print(f"listening on {server.url}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        if args.log:
            for entry in server.log.entries():
                print(f"{entry.service}\t{entry.peer}\t{entry.detail}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
