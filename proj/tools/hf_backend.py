#!/usr/bin/env python3
"""Reference hidden-state server for styloscope, backed by Hugging Face transformers.

POST /v1/tokenize  {"model", "text"}                          -> {"token_ids": [...]}
POST /v1/hidden    {"model", "token_ids", "layers", "position"} -> {"dim": d, "hidden": {"L": [...]}}

Layer 0 is the embedding output; layer L is the residual stream after block L.

    python tools/hf_backend.py --model meta-llama/Llama-3.2-1B --port 8080
    python tools/hf_backend.py --tiny-random --port 8080   # smoke tests, no download
"""

import argparse
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import torch


class ByteTokenizer:
    """UTF-8 bytes as token ids; used with --tiny-random."""

    def encode(self, text):
        return list(text.encode("utf-8"))


def load(args):
    if args.tiny_random:
        from transformers import GPT2Config, GPT2Model

        torch.manual_seed(args.seed)
        config = GPT2Config(vocab_size=256, n_positions=1024, n_embd=64, n_layer=4, n_head=4,
                            bos_token_id=0, eos_token_id=0)
        return "tiny-random", ByteTokenizer(), GPT2Model(config).eval()

    from transformers import AutoModel, AutoTokenizer

    tok = AutoTokenizer.from_pretrained(args.model)
    dtype = getattr(torch, args.dtype)
    model = AutoModel.from_pretrained(args.model, torch_dtype=dtype).to(args.device).eval()

    class HfTokenizer:
        def encode(self, text):
            return tok(text, add_special_tokens=False)["input_ids"]

    return args.model, HfTokenizer(), model


def make_handler(model_id, tokenizer, model, device, lock):
    n_layers = model.config.num_hidden_layers

    class Handler(BaseHTTPRequestHandler):
        def _send(self, status, payload):
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            try:
                req = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
            except (ValueError, json.JSONDecodeError) as e:
                return self._send(400, {"error": f"bad JSON: {e}"})
            if req.get("model") != model_id:
                return self._send(404, {"error": f"model {req.get('model')!r} is not loaded"})

            if self.path.endswith("/v1/tokenize"):
                return self._send(200, {"token_ids": tokenizer.encode(req.get("text", ""))})

            if self.path.endswith("/v1/hidden"):
                ids = req.get("token_ids") or []
                layers = req.get("layers") or []
                if not ids:
                    return self._send(400, {"error": "token_ids is empty"})
                if any(l < 0 or l > n_layers for l in layers):
                    return self._send(400, {"error": f"layers must lie in [0, {n_layers}]"})
                with lock, torch.no_grad():
                    out = model(torch.tensor([ids], device=device), output_hidden_states=True)
                states = out.hidden_states
                hidden = {str(l): states[l][0, -1].float().cpu().tolist() for l in layers}
                return self._send(200, {"dim": int(states[0].shape[-1]), "hidden": hidden})

            return self._send(404, {"error": f"unknown route {self.path}"})

        def log_message(self, fmt, *a):
            logging.debug(fmt, *a)

    return Handler


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--model", default="meta-llama/Llama-3.2-1B")
    p.add_argument("--tiny-random", action="store_true", help="4-layer, 64-wide random GPT-2 with byte tokens")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--device", default="cpu")
    p.add_argument("--dtype", default="float32")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)

    model_id, tokenizer, model = load(args)
    config = model.config
    logging.info("serving %s: %d layers, hidden size %d on %s:%d", model_id, config.num_hidden_layers,
                 getattr(config, "hidden_size", getattr(config, "n_embd", 0)), args.host, args.port)
    handler = make_handler(model_id, tokenizer, model, args.device, threading.Lock())
    ThreadingHTTPServer((args.host, args.port), handler).serve_forever()


if __name__ == "__main__":
    main()
