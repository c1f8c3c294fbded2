"""In-process HTTP server exposing a policy over the rollout protocol.

Used by the contract test suite and as a reference implementation of
the wire format. The server wraps any Policy (normally a toy) and
serves:

    POST /rollout  {prompt, n, temperature, seed}
    POST /logprob  {prompt, token_ids, params_tag}

Run standalone with `python -m prpo.stub_server --manifest m.json`.
"""

from __future__ import annotations

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .policy import Policy
from .serialize import Prompt


class PolicyStubServer:
    def __init__(self, policy: Policy, host: str = "127.0.0.1", port: int = 0):
        self.policy = policy
        handler = _make_handler(policy)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "PolicyStubServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "PolicyStubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def _make_handler(policy: Policy):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output quiet
            pass

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            self._reply(200, {"status": "ok"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", "0"))
            try:
                request = json.loads(self.rfile.read(length))
            except ValueError:
                self._reply(400, {"error": "invalid JSON"})
                return
            try:
                if self.path == "/rollout":
                    prompt = Prompt(text=request["prompt"], n_features=0)
                    completions = policy.rollout(
                        prompt,
                        int(request["n"]),
                        float(request.get("temperature", 1.0)),
                        int(request.get("seed", 0)),
                    )
                    self._reply(
                        200,
                        {
                            "completions": [
                                {
                                    "text": c.text,
                                    "token_ids": c.token_ids,
                                    "logprobs": c.logprobs_current,
                                }
                                for c in completions
                            ]
                        },
                    )
                elif self.path == "/logprob":
                    logprobs = policy.logprob_tagged(
                        Prompt(text=request["prompt"], n_features=0),
                        [int(t) for t in request["token_ids"]],
                        request.get("params_tag", "current"),
                    )
                    self._reply(200, {"logprobs": logprobs})
                else:
                    self._reply(404, {"error": f"unknown path {self.path}"})
            except Exception as exc:
                self._reply(400, {"error": str(exc)})

    return Handler


def main(argv: list[str] | None = None) -> int:
    from .dataset import load_dataset, resolve_label_range
    from .policy import ToyClassifierPolicy, ToyRegressorPolicy

    parser = argparse.ArgumentParser(description="serve a toy policy over HTTP")
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8731)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    examples, manifest = load_dataset(args.dataset, args.manifest)
    manifest = resolve_label_range(manifest, examples)
    if manifest.task == "classification":
        policy = ToyClassifierPolicy(manifest, seed=args.seed)
    else:
        policy = ToyRegressorPolicy(manifest, seed=args.seed)
    server = PolicyStubServer(policy, args.host, args.port)
    print(f"serving toy {policy.kind} policy at {server.endpoint}")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
