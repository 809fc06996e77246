import json
import sys

# Minimal JSON-lines language model: hidden row = [id, position], uniform
# over the vocabulary except a spike on id 0 at every mask.
HIDDEN = 2
vocab = int(sys.argv[1])
for line in sys.stdin:
    req = json.loads(line)
    ids = req["ids"]
    if any(i < 0 or i >= vocab for i in ids):
        print(json.dumps({"error": "id out of range"}), flush=True)
        continue
    hidden = [[float(i), float(n)] for n, i in enumerate(ids)]
    probs = []
    for i in ids:
        if i == req["mask_id"]:
            row = [1.0] * vocab
            row[0] = 10.0
            probs.append(row)
    print(json.dumps({"hidden": hidden, "mask_probs": probs}), flush=True)
