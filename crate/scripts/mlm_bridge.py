"""JSON-lines bridge between stereoprobe and a Hugging Face masked LM.

Reads one request per line on stdin and writes one response per line on
stdout. Start with: python3 mlm_bridge.py --model <hub id or directory>
"""

import argparse
import copy
import json
import math
import os
import random
import sys

import torch
from transformers import (
    AutoModelForMaskedLM,
    AutoTokenizer,
    DataCollatorForLanguageModeling,
    get_linear_schedule_with_warmup,
)

MODEL_ID_FILE = "stereoprobe_model_id.txt"


def load(name):
    tok = AutoTokenizer.from_pretrained(name)
    model = AutoModelForMaskedLM.from_pretrained(name)
    model.eval()
    model_id = name
    marker = os.path.join(name, MODEL_ID_FILE)
    if os.path.isfile(marker):
        with open(marker) as f:
            model_id = f.read().strip()
    return tok, model, model_id


def vocab_tokens(tok, size):
    seen = set()
    out = []
    for i, t in enumerate(tok.convert_ids_to_tokens(list(range(size)))):
        if t is None or t in seen:
            t = f"<unused-{i}>"
        seen.add(t)
        out.append(t)
    return out


def info(tok, model, model_id):
    size = model.config.vocab_size
    tokens = vocab_tokens(tok, size)
    cont = word = None
    if sum(t.startswith("##") for t in tokens) > size // 20:
        cont = "##"
    elif sum(t.startswith("Ġ") for t in tokens) > size // 20:
        word = "Ġ"
    elif sum(t.startswith("▁") for t in tokens) > size // 20:
        word = "▁"
    lower = getattr(tok, "do_lower_case", False) or getattr(tok, "init_kwargs", {}).get("do_lower_case", False)
    return {
        "model_id": model_id,
        "tokens": tokens,
        "mask_token": tok.mask_token,
        "casing": "uncased" if lower else "cased",
        "special_tokens": list(tok.all_special_tokens),
        "continuation_prefix": cont,
        "word_prefix": word,
    }


@torch.no_grad()
def predict(tok, model, text, slot):
    enc = tok(text, return_tensors="pt")
    positions = (enc["input_ids"][0] == tok.mask_token_id).nonzero().flatten().tolist()
    if slot >= len(positions):
        return {"error": f"mask slot {slot} not found, sentence has {len(positions)}"}
    logits = model(**enc).logits[0, positions[slot]]
    return {"probs": torch.softmax(logits.double(), dim=-1).tolist()}


def train(tok, base, req):
    # the loaded model keeps serving predictions unchanged
    model = copy.deepcopy(base)
    cfg = req["config"]
    seed = int(req["seed"])
    random.seed(seed)
    torch.manual_seed(seed)
    enc = [tok(d, truncation=True, max_length=cfg["max_len"])["input_ids"] for d in req["docs"]]
    collator = DataCollatorForLanguageModeling(tok, mlm_probability=cfg["mask_prob"])
    order = list(range(len(enc)))
    bs = cfg["batch_size"]
    total = math.ceil(len(enc) / bs) * cfg["epochs"]
    opt = torch.optim.AdamW(model.parameters(), lr=cfg["learning_rate"])
    sched = get_linear_schedule_with_warmup(opt, cfg["warmup_steps"], total)
    model.train()
    losses = []
    for _ in range(cfg["epochs"]):
        random.shuffle(order)
        for i in range(0, len(order), bs):
            batch = collator([{"input_ids": enc[j]} for j in order[i : i + bs]])
            loss = model(**batch).loss
            loss.backward()
            opt.step()
            sched.step()
            opt.zero_grad()
            losses.append(float(loss))
    model.eval()
    out = req["out_dir"]
    os.makedirs(out, exist_ok=True)
    model.save_pretrained(out)
    tok.save_pretrained(out)
    with open(os.path.join(out, MODEL_ID_FILE), "w") as f:
        f.write(req["model_id"])
    return {"steps": len(losses), "losses": losses}


@torch.no_grad()
def perplexity(tok, model, docs, max_len):
    nll, n = 0.0, 0
    for d in docs:
        ids = tok(d, truncation=True, max_length=max_len, return_tensors="pt")["input_ids"]
        special = set(tok.all_special_ids)
        for i in range(ids.shape[1]):
            target = int(ids[0, i])
            if target in special:
                continue
            masked = ids.clone()
            masked[0, i] = tok.mask_token_id
            logp = torch.log_softmax(model(input_ids=masked).logits[0, i].double(), dim=-1)
            nll -= float(logp[target])
            n += 1
    if n == 0:
        return {"error": "no tokens to score"}
    return {"ppl": math.exp(nll / n)}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", required=True)
    args = ap.parse_args()
    tok, model, model_id = load(args.model)
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            req = json.loads(line)
            op = req.get("op")
            if op == "quit":
                break
            if op == "info":
                resp = info(tok, model, model_id)
            elif op == "predict":
                resp = predict(tok, model, req["text"], int(req["slot"]))
            elif op == "train":
                resp = train(tok, model, req)
            elif op == "perplexity":
                resp = perplexity(tok, model, req["docs"], int(req["max_len"]))
            else:
                resp = {"error": f"unknown op {op!r}"}
        except Exception as e:  # reported to the caller, not fatal
            resp = {"error": f"{type(e).__name__}: {e}"}
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
