"""Solve an SDPA sparse file with cvxpy and record the result as JSON.

Usage: python3 tools/solve_sdpa.py PROBLEM.dat-s OUT.json [--solver CVXOPT]

The file is read in the convention  minimize c^T x  s.t.  sum_i F_i x_i - F_0 >= 0.
"""
import argparse
import json
import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    tokens = []
    with open(path) as f:
        for line in f:
            s = line.strip()
            if not s or s[0] in '*"':
                continue
            tokens.append(s.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(tokens[0].split()[0])
    nblock = int(tokens[1].split()[0])
    sizes = [int(v) for v in tokens[2].split()[:nblock]]
    c = np.array([float(v) for v in tokens[3].split()[:m]])
    entries = []
    for t in tokens[4:]:
        mat, blk, i, j, v = t.split()[:5]
        entries.append((int(mat), int(blk), int(i), int(j), float(v)))
    return m, sizes, c, entries


def lp_constraints(n, mats, x):
    """Diagonal block rows; a row followed by its negation becomes an equality."""
    a = np.zeros((n, x.shape[0]))
    f0 = np.zeros(n)
    for mat, cells in mats.items():
        for i, j, v in cells:
            if mat == 0:
                f0[i] = v
            else:
                a[i, mat - 1] = v
    eq, ineq, i = [], [], 0
    while i < n:
        if i + 1 < n and np.array_equal(a[i + 1], -a[i]) and f0[i + 1] == -f0[i]:
            eq.append(i)
            i += 2
        else:
            ineq.append(i)
            i += 1
    out = []
    if eq:
        out.append(a[eq] @ x == f0[eq])
    if ineq:
        out.append(a[ineq] @ x >= f0[ineq])
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem")
    ap.add_argument("out")
    ap.add_argument("--solver", default="CVXOPT")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    m, sizes, c, entries = read_sdpa(args.problem)
    x = cp.Variable(m)
    mats = {}
    for mat, blk, i, j, v in entries:
        mats.setdefault(blk, {}).setdefault(mat, []).append((i - 1, j - 1, v))
    constraints = []
    for b, size in enumerate(sizes, start=1):
        n = abs(size)
        expr = 0
        for mat, cells in mats.get(b, {}).items():
            a = np.zeros((n, n))
            for i, j, v in cells:
                a[i, j] = v
                a[j, i] = v
            expr = expr - a if mat == 0 else expr + a * x[mat - 1]
        if size > 0:
            constraints.append((expr + expr.T) / 2 >> 0)
        else:
            constraints.extend(lp_constraints(n, mats.get(b, {}), x))
    prob = cp.Problem(cp.Minimize(c @ x), constraints)
    opts = {"eps_abs": 1e-10, "eps_rel": 1e-10, "max_iters": 200000} if args.solver == "SCS" else {}
    prob.solve(solver=args.solver, verbose=args.verbose, **opts)
    out = {
        "problem": args.problem.split("/")[-1],
        "solver": args.solver,
        "cvxpy": cp.__version__,
        "status": prob.status,
        "objective": float(prob.value) if prob.value is not None and np.isfinite(prob.value) else None,
        "x": None if x.value is None else [float(v) for v in x.value],
    }
    with open(args.out, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
    print(prob.status, prob.value, file=sys.stderr)


if __name__ == "__main__":
    main()
