"""Writes a query/gallery pair and the expected retrieval result.

The expected values come from a direct brute-force ranking, independent of
the Rust implementation. Integer-valued features make distance ties exact,
so the gallery-index tie-break is exercised.
"""
import json
import random
import struct


def write_set(stem, rows, pids, camids):
    with open(stem + ".feat", "wb") as f:
        f.write(b"FEAT1\0")
        f.write(struct.pack("<II", len(rows), len(rows[0])))
        for row in rows:
            f.write(struct.pack("<%df" % len(row), *row))
    with open(stem + ".meta.csv", "w") as f:
        f.write("sample_id,pid,camid\n")
        for i, (p, c) in enumerate(zip(pids, camids)):
            f.write(f"{i},{p},{c}\n")


def expected(q, g, max_rank):
    qx, qp, qc = q
    gx, gp, gc = g
    first_ranks, aps = [], []
    for i in range(len(qp)):
        cand = [j for j in range(len(gp)) if not (gp[j] == qp[i] and gc[j] == qc[i])]
        d2 = {j: sum((a - b) ** 2 for a, b in zip(qx[i], gx[j])) for j in cand}
        order = sorted(cand, key=lambda j: (d2[j], j))
        hits, precisions = 0, []
        for pos, j in enumerate(order):
            if gp[j] == qp[i]:
                hits += 1
                precisions.append(hits / (pos + 1))
        if hits == 0:
            continue
        total = 0.0
        for p in precisions:
            total += p
        aps.append(total / hits)
        first_ranks.append(next(pos + 1 for pos, j in enumerate(order) if gp[j] == qp[i]))
    valid = len(aps)
    ap_sum = 0.0
    for a in aps:
        ap_sum += a
    cmc = [sum(1 for r in first_ranks if r <= k) / valid for k in range(1, max_rank + 1)]
    return {"status": "ok", "map": ap_sum / valid, "cmc": cmc, "num_valid_queries": valid}


def main():
    rng = random.Random(11)
    labels = [3, 17, 42, 5, 99, 8]
    dim = 3

    def draw(count):
        xs = [[float(rng.randint(-3, 3)) for _ in range(dim)] for _ in range(count)]
        ps = [rng.choice(labels) for _ in range(count)]
        cs = [rng.randint(0, 2) for _ in range(count)]
        return xs, ps, cs

    q = draw(12)
    g = draw(40)
    write_set("eval_query", *q)
    write_set("eval_gallery", *g)
    with open("eval_expected.json", "w") as f:
        json.dump({"max_rank": 5, "result": expected(q, g, 5)}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
