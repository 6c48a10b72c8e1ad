"""Pure-Python twins of the compiled loops in ``_kernels.pyx``.

Same operations in the same order on IEEE doubles, hence bit-identical output.
"""


def path_fill(m, r, q, out):
    vals = m.tolist()
    res = [0.0] * len(vals)
    r = float(r)
    q = float(q)
    for i, mi in enumerate(vals):
        r = mi * r + q
        res[i] = r
    out[:] = res
    return r


def series_fill(m, pos, acc, prod, terms, q, tol, max_terms, out, truncated, out_pos):
    vals = m.tolist()
    n_m = len(vals)
    n_out = len(out)
    res = []
    flags = []
    start = out_pos
    while out_pos < n_out:
        if prod <= tol or terms >= max_terms:
            res.append(acc)
            flags.append(prod > tol)
            out_pos += 1
            acc = q
            prod = 1.0
            terms = 0
            continue
        if pos >= n_m:
            break
        prod = prod * vals[pos]
        pos += 1
        acc = acc + q * prod
        terms += 1
    if res:
        out[start:out_pos] = res
        truncated[start:out_pos] = flags
    return pos, out_pos, acc, prod, terms
