#!/usr/bin/env python3
# Test oracle speaking one JSON object per line.
#   ndjson_oracle.py const 0|1   binary answers, fixed value
#   ndjson_oracle.py identity    recovery answers equal to the query
import json
import sys

mode = sys.argv[1]
for line in sys.stdin:
    x = json.loads(line)["query"]
    if mode == "const":
        out = {"answer": int(sys.argv[2])}
    elif mode == "identity":
        out = {"recovered": x}
    else:
        out = {"error": "unknown mode"}
    sys.stdout.write(json.dumps(out) + "\n")
    sys.stdout.flush()
