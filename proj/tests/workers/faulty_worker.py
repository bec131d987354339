#!/usr/bin/env python3
# Sphere worker that misbehaves once it has answered GOOD requests.
# usage: faulty_worker.py MODE GOOD
#   MODE: malformed | slow | crash | error | nonfinite | silent-exit | huge
import json
import sys
import time

mode, good = sys.argv[1], int(sys.argv[2])
served = 0
for line in sys.stdin:
    x = json.loads(line)["x"]
    if served >= good:
        if mode == "malformed":
            print("this is not json", flush=True)
        elif mode == "slow":
            time.sleep(30)
        elif mode == "crash":
            sys.exit(7)
        elif mode == "error":
            print(json.dumps({"error": "cannot evaluate here"}), flush=True)
        elif mode == "nonfinite":
            print('{"y": 1e999}', flush=True)
        elif mode == "silent-exit":
            sys.exit(0)
        elif mode == "huge":
            print(json.dumps({"y": (-1) ** served * 1e300}), flush=True)
            served += 1
        continue
    served += 1
    print(json.dumps({"y": sum(v * v for v in x)}), flush=True)
