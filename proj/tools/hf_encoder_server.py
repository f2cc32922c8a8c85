#!/usr/bin/env python3
# Copyright 2026 The tapd Authors
# SPDX-License-Identifier: Apache-2.0
"""Masked-LM encoder server for the tapd pretrained backend.

Reads requests from stdin and writes responses to stdout. Each message is a
single JSON line, optionally followed by a binary payload of little-endian
float64 values whose length (in values) is given by the "payload" field.
Token ids arrive already tokenised; the server never tokenises text.
"""

import argparse
import json
import os
import sys
import tempfile

import numpy as np
import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer


class Handle:
    def __init__(self, model):
        self.model = model
        self.optimizer = None
        self.pending = None


class Server:
    def __init__(self, identifier, device, dtype):
        self.identifier = identifier
        self.device = torch.device(device)
        self.dtype = torch.float64 if dtype == "float64" else torch.float32
        torch.manual_seed(0)
        base = AutoModelForMaskedLM.from_pretrained(identifier).to(self.device, dtype=self.dtype)
        self.tokenizer = AutoTokenizer.from_pretrained(identifier)
        self.handles = {0: Handle(base)}
        self.next_handle = 1

    def _read_payload(self, count):
        raw = sys.stdin.buffer.read(8 * count)
        if len(raw) != 8 * count:
            raise RuntimeError("short payload")
        return np.frombuffer(raw, dtype="<f8")

    def _pad(self, ids):
        length = max(len(s) for s in ids)
        pad = self.tokenizer.pad_token_id or 0
        batch = torch.full((len(ids), length), pad, dtype=torch.long)
        mask = torch.zeros((len(ids), length), dtype=torch.long)
        for i, seq in enumerate(ids):
            batch[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
            mask[i, : len(seq)] = 1
        return batch.to(self.device), mask.to(self.device)

    def _forward(self, handle, req, train):
        ids = req["ids"]
        masks = req["mask_index"]
        words = req.get("label_words")
        model = handle.model
        model.train(train)
        batch, attention = self._pad(ids)
        with torch.set_grad_enabled(train):
            out = model(input_ids=batch, attention_mask=attention, output_hidden_states=True)
            hidden = out.hidden_states[-1]
            scores = None
            if words is not None:
                rows = torch.arange(len(ids), device=self.device)
                at_mask = out.logits[rows, torch.tensor(masks, device=self.device)]
                scores = at_mask[:, torch.tensor(words, device=self.device)]
        if train:
            handle.pending = (hidden, scores, [len(s) for s in ids])
        parts = []
        for i, seq in enumerate(ids):
            parts.append(hidden[i, : len(seq)].detach().cpu().numpy().reshape(-1))
        if scores is not None:
            parts.append(scores.detach().cpu().numpy().reshape(-1))
        return np.concatenate(parts).astype("<f8")

    def handle(self, req, payload):
        op = req["op"]
        h = self.handles.get(req.get("handle", 0))
        model = h.model if h else None
        if op == "hello":
            cfg = model.config
            vocab_dir = tempfile.mkdtemp(prefix="tapd-vocab-")
            files = self.tokenizer.save_vocabulary(vocab_dir)
            return {
                "d_h": cfg.hidden_size,
                "vocab_size": cfg.vocab_size,
                "max_positions": cfg.max_position_embeddings,
                "vocab_file": files[0],
            }, None
        if op == "clone":
            import copy

            self.handles[self.next_handle] = Handle(copy.deepcopy(model))
            self.next_handle += 1
            return {"handle": self.next_handle - 1}, None
        if op == "free":
            if req["handle"] != 0:
                self.handles.pop(req["handle"], None)
            return {}, None
        if op in ("encode", "forward_train"):
            data = self._forward(h, req, op == "forward_train")
            return {}, data
        if op == "backward":
            hidden, scores, lengths = h.pending
            grads = payload
            d = hidden.shape[-1]
            g_hidden = torch.zeros_like(hidden)
            offset = 0
            for i, n in enumerate(lengths):
                block = torch.from_numpy(grads[offset : offset + n * d].copy()).view(n, d)
                g_hidden[i, :n] = block.to(hidden.dtype).to(self.device)
                offset += n * d
            tensors, gradients = [hidden], [g_hidden]
            if scores is not None:
                g_scores = torch.from_numpy(grads[offset : offset + scores.numel()].copy()).view_as(scores)
                tensors.append(scores)
                gradients.append(g_scores.to(scores.dtype).to(self.device))
            torch.autograd.backward(tensors, gradients)
            h.pending = None
            return {}, None
        if op == "zero_grad":
            model.zero_grad(set_to_none=False)
            return {}, None
        if op == "step":
            if h.optimizer is None:
                h.optimizer = torch.optim.Adam(
                    model.parameters(), lr=req["lr"], betas=(req["beta1"], req["beta2"]), eps=req["eps"]
                )
            h.optimizer.step()
            h.optimizer.zero_grad(set_to_none=False)
            return {}, None
        if op == "output_scores":
            vec = torch.from_numpy(payload.copy()).to(self.device, dtype=self.dtype)
            with torch.no_grad():
                model.eval()
                head = model.get_output_embeddings()
                if head is None:
                    raise RuntimeError("model has no masked-LM output embedding")
                logits = model.cls(vec.view(1, 1, -1)) if hasattr(model, "cls") else head(vec.view(1, -1))
            return {}, logits.reshape(-1).cpu().numpy().astype("<f8")
        if op == "input_embeddings":
            with torch.no_grad():
                emb = model.get_input_embeddings().weight[torch.tensor(req["ids"], dtype=torch.long)]
            return {}, emb.cpu().numpy().reshape(-1).astype("<f8")
        if op == "embedding_std":
            with torch.no_grad():
                w = model.get_input_embeddings().weight
                value = float(((w - w.mean()) ** 2).mean().sqrt())
            return {"value": value}, None
        if op == "save":
            torch.save(model.state_dict(), req["path"])
            return {}, None
        if op == "load":
            model.load_state_dict(torch.load(req["path"], map_location=self.device))
            return {}, None
        raise RuntimeError("unknown op " + op)

    def serve(self):
        out = sys.stdout.buffer
        for line in sys.stdin.buffer:
            if not line.strip():
                continue
            try:
                req = json.loads(line)
                payload = self._read_payload(int(req.get("payload", 0)))
                reply, data = self.handle(req, payload)
                reply["ok"] = True
            except Exception as exc:  # reported back to the client
                reply, data = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}, None
            reply["payload"] = 0 if data is None else int(data.size)
            out.write((json.dumps(reply) + "\n").encode())
            if data is not None:
                out.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
            out.flush()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--model", required=True)
    parser.add_argument("--device", default=os.environ.get("TAPD_DEVICE", "cpu"))
    parser.add_argument("--dtype", choices=["float32", "float64"], default=os.environ.get("TAPD_DTYPE", "float32"))
    args = parser.parse_args()
    torch.set_num_threads(max(1, int(os.environ.get("TAPD_THREADS", "1"))))
    Server(args.model, args.device, args.dtype).serve()


if __name__ == "__main__":
    main()
