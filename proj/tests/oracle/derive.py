#!/usr/bin/env python3
"""Independent reference evaluations at 50 significant digits.

Regenerate the frozen test header with:
    python3 tests/oracle/derive.py > tests/oracle/oracle_values.hpp
"""
import math
import random
from collections import Counter

from mpmath import mp, mpf, exp, log, sqrt, tanh

mp.dps = 50


def draw(rng, n, lo=-1.0, hi=1.0):
    return [round(rng.uniform(lo, hi), 3) for _ in range(n)]


def mat(flat, r, c):
    return [[mpf(repr(flat[i * c + j])) for j in range(c)] for i in range(r)]


def matmul(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def add_row(a, bias):
    return [[x + y for x, y in zip(r, bias[0])] for r in a]


def transpose(a):
    return [list(col) for col in zip(*a)]


def sigmoid(x):
    return 1 / (1 + exp(-x))


def softmax_row(r):
    m = max(r)
    e = [exp(x - m) for x in r]
    s = sum(e)
    return [x / s for x in e]


def attend(q, k, v):
    d = len(q[0])
    s = [[x / sqrt(d) for x in row] for row in matmul(q, transpose(k))]
    w = [softmax_row(r) for r in s]
    return matmul(w, v), w


def aoa(q, vhat, p):
    info = add_row(add(matmul(q, p["iq"]), matmul(vhat, p["iv"])), p["ib"])
    gate = add_row(add(matmul(q, p["gq"]), matmul(vhat, p["gv"])), p["gb"])
    return [[sigmoid(g) * i for g, i in zip(gr, ir)] for gr, ir in zip(gate, info)]


def layer_norm(x, gain, bias, eps=mpf("1e-5")):
    out = []
    for r in x:
        m = sum(r) / len(r)
        var = sum((v - m) ** 2 for v in r) / len(r)
        out.append([gain[0][j] * (v - m) / sqrt(var + eps) + bias[0][j] for j, v in enumerate(r)])
    return out


def fmt(v):
    return mp.nstr(v, 25, min_fixed=-5, max_fixed=5)


def emit(name, rows):
    flat = [x for r in rows for x in r] if isinstance(rows[0], list) else rows
    body = ", ".join(fmt(x) if not isinstance(x, float) else repr(x) for x in flat)
    print(f"inline constexpr double {name}[] = {{{body}}};")


def emit_raw(name, flat):
    print(f"inline constexpr double {name}[] = {{{', '.join(repr(x) for x in flat)}}};")


def emit_scalar(name, v):
    print(f"inline constexpr double {name} = {fmt(v)};")


def aoa_params(rng, d):
    raw = {k: draw(rng, d * d if k[1] != "b" else d) for k in ["iq", "iv", "ib", "gq", "gv", "gb"]}
    p = {k: mat(v, d, d) if k[1] != "b" else mat(v, 1, d) for k, v in raw.items()}
    return raw, p


def emit_aoa(prefix, raw):
    for k, v in raw.items():
        emit_raw(f"{prefix}_{k}", v)


# ---------------------------------------------------------------- metrics


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(corpus):
    correct = [0] * 4
    guess = [0] * 4
    test_len = 0
    ref_len = 0
    for cand, refs in corpus:
        test_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, 5):
            c = ngrams(cand, n)
            best = Counter()
            for r in refs:
                for g, k in ngrams(r, n).items():
                    best[g] = max(best[g], k)
            correct[n - 1] += sum(min(k, best[g]) for g, k in c.items())
            guess[n - 1] += sum(c.values())
    if test_len == 0:
        return mpf(0)
    logs = 0
    for n in range(4):
        p = mpf(correct[n]) / guess[n] if correct[n] > 0 else mpf("1e-15") / (guess[n] + mpf("1e-9"))
        logs += log(p)
    bp = exp(1 - mpf(ref_len) / test_len) if test_len < ref_len else mpf(1)
    return 100 * bp * exp(logs / 4)


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i][j] = t[i - 1][j - 1] + 1 if a[i - 1] == b[j - 1] else max(t[i - 1][j], t[i][j - 1])
    return t[-1][-1]


def rouge_l(corpus, beta=mpf("1.2")):
    total = mpf(0)
    for cand, refs in corpus:
        if not cand:
            continue
        p = max(mpf(lcs(cand, r)) / len(cand) for r in refs)
        r = max(mpf(lcs(cand, r)) / len(r) for r in refs)
        if p > 0 and r > 0:
            total += (1 + beta ** 2) * p * r / (r + beta ** 2 * p)
    return 100 * total / len(corpus)


def cider_d(corpus, sigma=mpf(6)):
    n_img = len(corpus)
    df = Counter()
    for _, refs in corpus:
        seen = set()
        for r in refs:
            for n in range(1, 5):
                seen.update(ngrams(r, n).keys())
        df.update(seen)

    def vec(tokens):
        v = [dict() for _ in range(4)]
        for n in range(1, 5):
            for g, tf in ngrams(tokens, n).items():
                v[n - 1][g] = tf * (log(n_img) - log(max(1, df[g])))
        norms = [sqrt(sum(x * x for x in vn.values())) for vn in v]
        return v, norms, len(tokens) - 1 if len(tokens) > 1 else 0

    total = mpf(0)
    for cand, refs in corpus:
        vh, nh, lh = vec(cand)
        per_n = [mpf(0)] * 4
        for r in refs:
            vr, nr, lr = vec(r)
            pen = exp(-mpf((lh - lr) ** 2) / (2 * sigma ** 2))
            for n in range(4):
                # full dot product over the union of n-grams, candidate side clipped
                keys = set(vh[n]) | set(vr[n])
                val = sum(min(vh[n].get(g, 0), vr[n].get(g, 0)) * vr[n].get(g, 0) for g in keys)
                if nh[n] != 0 and nr[n] != 0:
                    val /= nh[n] * nr[n]
                per_n[n] += val * pen
        total += 10 * (sum(per_n) / 4) / len(refs)
    return total / n_img


def main():
    rng = random.Random(20240607)
    print("#pragma once")
    print("// Generated by tests/oracle/derive.py; do not edit by hand.")
    print("namespace oracle {")

    # primitives
    emit("kSoftmax123", softmax_row([mpf(1), mpf(2), mpf(3)]))
    emit_scalar("kSigmoidMinus2", sigmoid(mpf(-2)))

    # attend: 2x4 Q, 3x4 K, 3x4 V
    q, k, v = draw(rng, 8), draw(rng, 12), draw(rng, 12)
    vals, w = attend(mat(q, 2, 4), mat(k, 3, 4), mat(v, 3, 4))
    emit_raw("kAttendQ", q)
    emit_raw("kAttendK", k)
    emit_raw("kAttendV", v)
    emit("kAttendWeights", w)
    emit("kAttendValues", vals)

    # aoa, d = 4
    d = 4
    aq, av = draw(rng, d), draw(rng, d)
    raw, p = aoa_params(rng, d)
    emit_raw("kAoaQuery", aq)
    emit_raw("kAoaAttended", av)
    emit_aoa("kAoa", raw)
    emit("kAoaOut", aoa(mat(aq, 1, d), mat(av, 1, d), p))

    # encode (1 layer, d=4, R=2, M=1, region/ocr dim 3) then decode_step (|V|=6)
    dr, de, V = 3, 3, 6
    regions, ocr = draw(rng, 2 * dr), draw(rng, de)
    wr, br, wo, bo = draw(rng, dr * d), draw(rng, d), draw(rng, de * d), draw(rng, d)
    lq, lk, lv = draw(rng, d * d), draw(rng, d * d), draw(rng, d * d)
    lraw, lp = aoa_params(rng, d)
    gain, beta = draw(rng, d, 0.5, 1.5), draw(rng, d, -0.2, 0.2)
    emb = draw(rng, V * d)
    wi, wh, bi, bh = draw(rng, 2 * d * 3 * d), draw(rng, d * 3 * d), draw(rng, 3 * d), draw(rng, 3 * d)
    aq_w, ak_w = draw(rng, d * d), draw(rng, d * d)
    draw_, dp = aoa_params(rng, d)
    wout, bout = draw(rng, d * V), draw(rng, V)
    h0 = draw(rng, d, -0.5, 0.5)
    prev = 4

    for name, val in [("Regions", regions), ("Ocr", ocr), ("RegionProj", wr), ("RegionBias", br),
                      ("OcrProj", wo), ("OcrBias", bo), ("LayerQuery", lq), ("LayerKey", lk),
                      ("LayerValue", lv), ("NormGain", gain), ("NormBias", beta), ("Embedding", emb),
                      ("CellInput", wi), ("CellHidden", wh), ("CellInputBias", bi), ("CellHiddenBias", bh),
                      ("AttnQuery", aq_w), ("AttnKey", ak_w), ("OutputWeight", wout), ("OutputBias", bout),
                      ("Hidden0", h0)]:
        emit_raw("kModel" + name, val)
    emit_aoa("kLayerAoa", lraw)
    emit_aoa("kDecoderAoa", draw_)

    x = add_row(matmul(mat(regions, 2, dr), mat(wr, dr, d)), mat(br, 1, d))
    x += add_row(matmul(mat(ocr, 1, de), mat(wo, de, d)), mat(bo, 1, d))
    att, _ = attend(matmul(x, mat(lq, d, d)), matmul(x, mat(lk, d, d)), matmul(x, mat(lv, d, d)))
    x = layer_norm(add(x, aoa(x, att, lp)), mat(gain, 1, d), mat(beta, 1, d))
    keys = matmul(x, mat(ak_w, d, d))
    pooled = [[sum(r[j] for r in x) / len(x) for j in range(d)]]
    emit("kEncodeRows", x)
    emit("kEncodeKeys", keys)
    emit("kEncodePooled", pooled)

    E = mat(emb, V, d)
    xt = [E[prev]]
    cell_in = [xt[0] + pooled[0]]
    gx = add_row(matmul(cell_in, mat(wi, 2 * d, 3 * d)), mat(bi, 1, 3 * d))[0]
    h = mat(h0, 1, d)
    gh = add_row(matmul(h, mat(wh, d, 3 * d)), mat(bh, 1, 3 * d))[0]
    z = [sigmoid(gx[j] + gh[j]) for j in range(d)]
    r = [sigmoid(gx[d + j] + gh[d + j]) for j in range(d)]
    n = [tanh(gx[2 * d + j] + r[j] * gh[2 * d + j]) for j in range(d)]
    h1 = [[n[j] + z[j] * (h[0][j] - n[j]) for j in range(d)]]
    ctx, a = attend(matmul(h1, mat(aq_w, d, d)), keys, x)
    logits = add_row(matmul(aoa(h1, ctx, dp), mat(wout, d, V)), mat(bout, 1, V))
    pv = [softmax_row(logits[0])]
    print(f"inline constexpr unsigned kModelPrevToken = {prev};")
    emit("kDecodeInput", xt)
    emit("kDecodeHidden", h1)
    emit("kDecodeAttention", a)
    emit("kDecodeContext", ctx)
    emit("kDecodePVocab", pv)

    # p_gen head on the decode outputs
    wc, ws, wx = draw(rng, d), draw(rng, d), draw(rng, d)
    bptr = round(rng.uniform(-1, 1), 3)
    emit_raw("kPtrContext", wc)
    emit_raw("kPtrState", ws)
    emit_raw("kPtrInput", wx)
    emit_raw("kPtrBias", [bptr])
    logit = sum(ctx[0][j] * mat(wc, d, 1)[j][0] + h1[0][j] * mat(ws, d, 1)[j][0] + xt[0][j] * mat(wx, d, 1)[j][0]
                for j in range(d)) + mpf(repr(bptr))
    emit_scalar("kPtrPGen", sigmoid(logit))

    # copy distribution + mixture on a random instance: fixed |V|=5, extended 8,
    # memory of 2 regions + 4 OCR rows holding ext ids [6, 3, 6, 7]
    att_raw = draw(rng, 6, 0.01, 1.0)
    s = sum(mpf(repr(x)) for x in att_raw)
    att_n = [mpf(repr(x)) / s for x in att_raw]
    positions, ids = [2, 3, 4, 5], [6, 3, 6, 7]
    mass = sum(att_n[pp] for pp in positions)
    copy = [mpf(0)] * 8
    for pp, i in zip(positions, ids):
        copy[i] += att_n[pp] / mass
    pv_raw = draw(rng, 5, 0.01, 1.0)
    sv = sum(mpf(repr(x)) for x in pv_raw)
    pv5 = [mpf(repr(x)) / sv for x in pv_raw]
    g = mpf("0.37")
    mixed = [g * (pv5[i] if i < 5 else 0) + (1 - g) * copy[i] for i in range(8)]
    emit("kCopyAttention", att_n)
    emit("kCopyDist", copy)
    emit("kMixPVocab", pv5)
    emit("kMixOut", mixed)

    # Adam: two hand-unrolled steps on one parameter
    b1, b2, eps, lr = mpf("0.9"), mpf("0.999"), mpf("1e-8"), mpf("0.01")
    theta, m, v2 = mpf("0.5"), mpf(0), mpf(0)
    for t, grad in enumerate([mpf("0.2"), mpf("-0.3")], start=1):
        m = b1 * m + (1 - b1) * grad
        v2 = b2 * v2 + (1 - b2) * grad * grad
        theta -= lr * (m / (1 - b1 ** t)) / (sqrt(v2 / (1 - b2 ** t)) + eps)
    emit_scalar("kAdamTwoSteps", theta)

    # metrics
    toy = [
        ("a bottle of acme on a table", ["a bottle of acme on a table", "a person holding a bottle of acme"]),
        ("a can of soup", ["a can of zorp on a counter", "the label of a can of zorp"]),
        ("a close up photo of a box", ["a close up photo of a box of tea", "a box of tea sitting on a counter",
                                       "the label of a box of tea"]),
    ]
    corpus = [(c.split(), [r.split() for r in refs]) for c, refs in toy]
    emit_scalar("kToyBleu4", bleu4(corpus))
    emit_scalar("kToyRougeL", rouge_l(corpus))
    emit_scalar("kToyCider", cider_d(corpus))
    emit_scalar("kBleuCatSat", bleu4([("the cat sat".split(), ["the cat sat down".split()])]))
    emit_scalar("kRougeAbcd", rouge_l([("a b c d".split(), ["a c d e".split()])]))
    print("}  // namespace oracle")


if __name__ == "__main__":
    main()
