# core/lp_format.py
"""Write an oracle instance as a CPLEX-LP text file for external MILP solvers."""
from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from core.oracle import MilpInstance

Terms = List[Tuple[float, str]]


def _num(v: float) -> str:
    return f"{v:.12g}"


def _expr(terms: Terms) -> str:
    out = []
    for coef, var in terms:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        out.append(f"{sign} {_num(abs(coef))} {var}")
    if not out:
        return "0 " + terms[0][1]
    text = " ".join(out)
    return text[2:] if text.startswith("+ ") else text


class LpProblem:
    """Objective, constraints, bounds and integer markers, kept in insertion order."""

    def __init__(self, name: str = "hyssim"):
        self.name = name
        self.objective: Terms = []
        self.constraints: Dict[str, str] = {}
        self.bounds: List[str] = []
        self.integer: List[str] = []

    def add_constraint(self, name: str, terms: Terms, sense: str, rhs: float) -> None:
        self.constraints[name] = f"{_expr(terms)} {sense} {_num(rhs)}"

    def __str__(self) -> str:
        out = [f"\\ {self.name}", "Minimize", f" obj: {_expr(self.objective)}", "Subject To"]
        out += [f" {name}: {body}" for name, body in self.constraints.items()]
        if self.bounds:
            out.append("Bounds")
            out += [f" {b}" for b in self.bounds]
        if self.integer:
            out.append("Generals")
            out += [f" {v}" for v in self.integer]
        out.append("End")
        return "\n".join(out) + "\n"


def build_lp(inst: MilpInstance) -> LpProblem:
    X = np.atleast_2d(inst.X)
    J, T = X.shape
    multi = np.ndim(inst.X) == 2
    we, wc = inst.w_e, inst.w_c

    def b(cls: str, j: int, t: int) -> str:
        return f"b{cls}_{j}_{t}" if multi else f"b{cls}_{t}"

    lp = LpProblem(f"hyssim oracle instance: T={T}, applications={J}, rate={inst.rate_mode}")
    for t in range(T):
        lp.objective.append((we * inst.ei_f + wc * inst.c_f, f"yf_{t}"))
        lp.objective.append((we * inst.ei_c + wc * inst.c_c, f"yc_{t}"))
        for j in range(J):
            lp.objective.append((we * (inst.eb_f - inst.ei_f), b("f", j, t)))
            lp.objective.append((we * (inst.eb_c - inst.ei_c), b("c", j, t)))
    for t in range(T + 1):
        lp.objective += [(we * inst.a_f, f"uf_{t}"), (we * inst.d_f, f"vf_{t}"),
                         (we * inst.a_c, f"uc_{t}"), (we * inst.d_c, f"vc_{t}")]

    sense = "=" if inst.rate_mode == "eq" else ">="
    for t in range(T):
        for j in range(J):
            name = f"rate_{j}_{t}" if multi else f"rate_{t}"
            lp.add_constraint(name, [(inst.r_c, b("c", j, t)), (inst.r_f, b("f", j, t))], sense, X[j, t])
        for cls in ("f", "c"):
            lp.add_constraint(f"idle{cls}_{t}",
                              [(1.0, f"y{cls}_{t}")] + [(-1.0, b(cls, j, t)) for j in range(J)], ">=", 0)

    # u_t >= Y_t - Y_{t-1}, v_t >= Y_{t-1} - Y_t with Y_{-1} = Y_T = 0
    for cls in ("f", "c"):
        for t in range(T + 1):
            up = [(1.0, f"u{cls}_{t}")]
            down = [(1.0, f"v{cls}_{t}")]
            if t < T:
                up.append((-1.0, f"y{cls}_{t}"))
                down.append((1.0, f"y{cls}_{t}"))
            if t > 0:
                up.append((1.0, f"y{cls}_{t - 1}"))
                down.append((-1.0, f"y{cls}_{t - 1}"))
            lp.add_constraint(f"up{cls}_{t}", up, ">=", 0)
            lp.add_constraint(f"dn{cls}_{t}", down, ">=", 0)

    S = inst.spinup
    if S > 0:
        for t in range(S, T):
            terms = [(1.0, f"yf_{t}")] + [(-1.0, f"uf_{tau}") for tau in range(t - S, t + 1)]
            lp.add_constraint(f"win_{t}", terms, ">=", 0)

    for t in range(T):
        lp.bounds.append(f"0 <= yf_{t} <= {inst.n_f}")
        if math.isfinite(inst.n_c):
            lp.bounds.append(f"0 <= yc_{t} <= {_num(inst.n_c)}")
        lp.integer.append(f"yf_{t}")
    return lp


def emit_lp(inst: MilpInstance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(str(build_lp(inst)))
