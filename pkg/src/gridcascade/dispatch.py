"""Linear-programming dispatch: initial min-cost DCOPF and min-shed re-dispatch.

The LP engine is a dense bounded-variable two-phase simplex. Dispatch
problems are posed per island in the distribution-factor form: branch flows
are linear in bus injections, so each flow limit becomes one range
constraint with a slack variable.
"""

from dataclasses import dataclass

import numpy as np

from .dcflow import bus_islands, nodal_reactance, solve_injections

_TOL = 1e-9
_FEAS_TOL = 1e-7
EPS_COST = 1e-6  # lexicographic weight: minimize shed first, then cost


class LpInfeasibleError(RuntimeError):
    """No feasible point; internal error for well-posed dispatch problems."""


class LpUnboundedError(RuntimeError):
    """Objective unbounded below; impossible with finite variable bounds."""


class DispatchInfeasibleError(RuntimeError):
    """Initial DCOPF cannot serve the full load (INFEASIBLE_WITH_NO_SHED)."""


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    basis: list


def solve_lp(A, b, c, bounds):
    """Minimize c@x subject to A@x = b and finite box bounds on x.

    Deterministic: entering variable by most negative reduced cost with
    smallest-index tie-break, falling back to Bland's rule if the iteration
    count grows; leaving variable by smallest index among ratio-test ties.

    Raises LpInfeasibleError / LpUnboundedError.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    lb = np.array([lo for lo, hi in bounds], dtype=float)
    ub = np.array([hi for lo, hi in bounds], dtype=float)
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("all variable bounds must be finite")
    if np.any(lb > ub + _TOL):
        raise LpInfeasibleError("empty box: lower bound above upper bound")

    # Phase 1: structural variables at their lower bound, one artificial per
    # row carrying the residual. Artificials are free upward (the ratio test
    # treats an infinite bound as non-limiting) and cost 1 each.
    residual = b - A @ lb
    sign = np.where(residual >= 0, 1.0, -1.0)
    a_full = np.hstack([A, np.diag(sign)])
    lb_full = np.concatenate([lb, np.zeros(m)])
    ub_full = np.concatenate([ub, np.full(m, np.inf)])
    basis = list(range(n, n + m))
    at_upper = np.zeros(n + m, dtype=bool)

    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    x, basis, at_upper = _simplex_core(a_full, b, c1, lb_full, ub_full, basis, at_upper)
    if float(c1 @ x) > 1e-7:
        raise LpInfeasibleError(f"phase-1 residual {float(c1 @ x):.3e}")

    # Phase 2: pin artificials at zero so they can never move again.
    ub_full[n:] = 0.0
    c2 = np.concatenate([c, np.zeros(m)])
    x, basis, at_upper = _simplex_core(a_full, b, c2, lb_full, ub_full, basis, at_upper)
    x = x[:n]
    if np.max(np.abs(A @ x - b)) > _FEAS_TOL:
        raise LpInfeasibleError("primal residual above tolerance after phase 2")
    return LpSolution(x=x, objective=float(c @ x), basis=[j for j in basis if j < n])


def _simplex_core(A, b, c, lb, ub, basis, at_upper):
    m, n = A.shape
    basis = list(basis)
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    movable = ub - lb > _TOL
    max_iter = 200 * (n + m + 10)
    bland_after = 10 * (n + m + 10)

    for it in range(max_iter):
        B = A[:, basis]
        x = np.where(at_upper, ub, lb)
        x[np.isinf(x)] = 0.0  # artificials marked at-lower only; guard anyway
        x[basis] = 0.0
        rhs = b - A @ x
        try:
            x_b = np.linalg.solve(B, rhs)
            y = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError as exc:  # pragma: no cover - degenerate input
            raise LpInfeasibleError("singular working basis") from exc
        x[basis] = x_b
        reduced = c - y @ A

        lower_viol = ~is_basic & movable & ~at_upper & (reduced < -_TOL)
        upper_viol = ~is_basic & movable & at_upper & (reduced > _TOL)
        candidates = np.flatnonzero(lower_viol | upper_viol)
        if candidates.size == 0:
            return x, basis, at_upper
        if it > bland_after:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmax(np.abs(reduced[candidates]))])
            best = np.abs(reduced[enter])
            ties = candidates[np.abs(reduced[candidates]) >= best - _TOL]
            enter = int(ties.min())
        direction = -1.0 if at_upper[enter] else 1.0

        w = np.linalg.solve(B, A[:, enter])
        # Entering moves by t >= 0; basic values change by -t * direction * w.
        step = ub[enter] - lb[enter]  # bound-swap limit
        leave = -1  # -1 encodes a bound swap
        delta = direction * w
        for i in range(m):
            if delta[i] > _TOL:
                limit = (x_b[i] - lb[basis[i]]) / delta[i]
            elif delta[i] < -_TOL:
                hi = ub[basis[i]]
                if np.isinf(hi):
                    continue
                limit = (x_b[i] - hi) / delta[i]
            else:
                continue
            limit = max(limit, 0.0)
            if limit < step - _TOL:
                step, leave = limit, i
            elif limit < step + _TOL:
                # tie: prefer the smallest leaving variable index; a bound
                # swap competes with index `enter`
                incumbent = enter if leave == -1 else basis[leave]
                if basis[i] < incumbent:
                    step, leave = min(step, limit), i
        if np.isinf(step):
            raise LpUnboundedError(f"variable {enter} can improve without bound")

        if leave == -1:
            at_upper[enter] = ~at_upper[enter]
            continue
        leaving_var = basis[leave]
        hit_lower = delta[leave] > 0
        at_upper[leaving_var] = not hit_lower
        basis[leave] = enter
        is_basic[enter] = True
        is_basic[leaving_var] = False
        at_upper[enter] = False
    raise LpInfeasibleError("simplex iteration limit exceeded")  # pragma: no cover


@dataclass
class DispatchProblem:
    """One island's dispatch inputs in either objective mode."""

    mode: str  # "MIN_COST" | "MIN_SHED"
    bus_ids: list
    branch_ids: list  # live branches inside the island
    gen_ids: list
    load: np.ndarray  # MW per island bus, aligned with bus_ids
    limits: np.ndarray  # MW per island branch, aligned with branch_ids


@dataclass
class DispatchResult:
    gen_output: np.ndarray  # MW per generator (network-wide)
    shed: np.ndarray  # MW per bus (network-wide, >= 0)
    flow: np.ndarray  # MW per branch (network-wide, 0 when out of service)
    objective: float  # total cost (MIN_COST) or total shed MW (MIN_SHED)


def _merit_fill(net, gen_ids, target_mw):
    """Cheapest-first dispatch of ``target_mw`` over the given units.

    Every unit starts at its minimum; returns None when the target is
    outside [sum pmin, sum pmax].
    """
    out = {}
    baseline = 0.0
    for g in gen_ids:
        out[g] = net.gen_pmin[g]
        baseline += net.gen_pmin[g]
    remaining = target_mw - baseline
    if remaining < -_TOL:
        return None
    for g in net.merit_order:
        if g not in out:
            continue
        add = min(net.gen_pmax[g] - out[g], remaining)
        if add > 0:
            out[g] += add
            remaining -= add
    if remaining > _TOL:
        return None
    return out


def _merit_fill_soft(net, gen_ids, target_mw):
    """Cheapest-first fill ignoring minimum-output floors (units may be off)."""
    out = {g: 0.0 for g in gen_ids}
    remaining = target_mw
    for g in net.merit_order:
        if g not in out:
            continue
        add = min(net.gen_pmax[g], remaining)
        if add > 0:
            out[g] = add
            remaining -= add
    return out


def _flow_matrix(net, x_nodal, branch_ids):
    """Rows of the injection-to-flow map for the given branches (MW/MW)."""
    rows = np.zeros((len(branch_ids), net.n_buses))
    for r, k in enumerate(branch_ids):
        f, t = net.from_bus[k], net.to_bus[k]
        rows[r] = (x_nodal[f] - x_nodal[t]) / net.reactance[k]
    return rows


def dcopf_initial(net, loads):
    """Min-cost dispatch of the intact network with no load shedding.

    Raises DispatchInfeasibleError when the full load cannot be served
    within branch limits (the caller may fall back to redispatch_min_shed).
    """
    loads = np.asarray(loads, dtype=float)
    in_service = np.ones(net.n_branches, dtype=bool)
    islands = bus_islands(net, in_service)
    if len(islands) != 1:
        raise ValueError("initial dispatch expects a connected network")
    total = float(loads.sum())
    gen_ids = list(range(net.n_generators))

    x_nodal = nodal_reactance(net, in_service, islands)
    merit = _merit_fill(net, gen_ids, total)
    if merit is None:
        raise DispatchInfeasibleError(
            f"capacity window cannot cover {total:.1f} MW with no shed"
        )
    gen_output = np.zeros(net.n_generators)
    for g, val in merit.items():
        gen_output[g] = val
    injection = -loads.copy()
    np.add.at(injection, net.gen_bus, gen_output)
    sol = solve_injections(net, in_service, injection, islands, x_nodal)
    if np.all(np.abs(sol.flow) <= net.flow_limit + _FEAS_TOL):
        return DispatchResult(
            gen_output=gen_output,
            shed=np.zeros(net.n_buses),
            flow=sol.flow,
            objective=float(net.gen_cost @ gen_output),
        )

    # Merit order violates a limit somewhere: solve the constrained LP.
    problem = DispatchProblem(
        mode="MIN_COST",
        bus_ids=islands[0],
        branch_ids=list(np.flatnonzero(in_service)),
        gen_ids=gen_ids,
        load=loads[islands[0]],
        limits=net.flow_limit[np.flatnonzero(in_service)],
    )
    try:
        gen_island, _ = _solve_island_lp(net, problem, x_nodal)
    except LpInfeasibleError as exc:
        raise DispatchInfeasibleError(
            "branch limits make the full load unservable"
        ) from exc
    gen_output = np.zeros(net.n_generators)
    gen_output[problem.gen_ids] = gen_island
    injection = -loads.copy()
    np.add.at(injection, net.gen_bus, gen_output)
    sol = solve_injections(net, in_service, injection, islands, x_nodal)
    return DispatchResult(
        gen_output=gen_output,
        shed=np.zeros(net.n_buses),
        flow=sol.flow,
        objective=float(net.gen_cost @ gen_output),
    )


def redispatch_min_shed(net, in_service, loads):
    """Per-island dispatch minimizing total shed, then generation cost.

    Always succeeds: islands without generation shed everything, and
    shedding is continuous per bus. Returns a merged network-wide result.
    """
    in_service = np.asarray(in_service, dtype=bool)
    loads = np.asarray(loads, dtype=float)
    islands = bus_islands(net, in_service)
    x_nodal = nodal_reactance(net, in_service, islands)

    gen_output = np.zeros(net.n_generators)
    shed = np.zeros(net.n_buses)
    gens_of_bus = {b.id: b.generators for b in net.buses}

    for island in islands:
        members = set(island)
        gen_ids = [g for b in island for g in gens_of_bus[b]]
        branch_ids = [
            k for k in np.flatnonzero(in_service) if net.branches[k].from_bus in members
        ]
        island_load = float(loads[island].sum())
        capacity = float(net.gen_pmax[gen_ids].sum()) if gen_ids else 0.0

        if not branch_ids:
            # Connected components without live branches are single buses:
            # serve whatever local capacity allows.
            bus = island[0]
            serve = min(island_load, capacity)
            merit = _merit_fill(net, gen_ids, serve) if gen_ids else {}
            if merit is None:  # pmin floor above local load: units switch off
                merit = _merit_fill_soft(net, gen_ids, serve)
            for g, val in merit.items():
                gen_output[g] = val
            shed[bus] = island_load - serve
            continue

        solved = False
        if capacity >= island_load - _TOL:
            merit = _merit_fill(net, gen_ids, island_load)
            if merit is not None:
                trial = np.zeros(net.n_buses)
                for g, val in merit.items():
                    trial[net.gen_bus[g]] += val
                trial[island] -= loads[island]
                rows = _flow_matrix(net, x_nodal, branch_ids)
                flows = rows @ trial
                if np.all(np.abs(flows) <= net.flow_limit[branch_ids] + _FEAS_TOL):
                    for g, val in merit.items():
                        gen_output[g] = val
                    solved = True
        if solved:
            continue

        problem = DispatchProblem(
            mode="MIN_SHED",
            bus_ids=island,
            branch_ids=branch_ids,
            gen_ids=gen_ids,
            load=loads[island],
            limits=net.flow_limit[branch_ids],
        )
        gen_island, shed_island = _solve_island_lp(net, problem, x_nodal)
        gen_output[gen_ids] = gen_island
        shed[island] = shed_island

    injection = -(loads - shed)
    np.add.at(injection, net.gen_bus, gen_output)
    sol = solve_injections(net, in_service, injection, islands, x_nodal)
    return DispatchResult(
        gen_output=gen_output,
        shed=shed,
        flow=sol.flow,
        objective=float(shed.sum()),
    )


def _solve_island_lp(net, problem, x_nodal):
    """Set up and solve one island's dispatch LP.

    Variables are [generation, shed (MIN_SHED only), one slack per branch
    range constraint]; rows are the island power balance plus one row per
    branch limit. Returns (gen_output, shed) aligned with the problem ids.
    """
    n_g = len(problem.gen_ids)
    n_b = len(problem.bus_ids)
    n_l = len(problem.branch_ids)
    with_shed = problem.mode == "MIN_SHED"
    n_s = n_b if with_shed else 0

    rows = _flow_matrix(net, x_nodal, problem.branch_ids)
    phi_gen = rows[:, net.gen_bus[problem.gen_ids]] if n_g else np.zeros((n_l, 0))
    phi_bus = rows[:, problem.bus_ids]
    base_load = np.zeros(net.n_buses)
    base_load[problem.bus_ids] = problem.load
    flow_of_load = rows @ base_load

    n_var = n_g + n_s + n_l
    A = np.zeros((1 + n_l, n_var))
    b = np.zeros(1 + n_l)
    A[0, :n_g] = 1.0
    if with_shed:
        A[0, n_g : n_g + n_s] = 1.0
    b[0] = float(problem.load.sum())
    A[1:, :n_g] = phi_gen
    if with_shed:
        A[1:, n_g : n_g + n_s] = phi_bus
    A[1:, n_g + n_s :] = np.eye(n_l)
    b[1:] = problem.limits + flow_of_load

    bounds = [(net.gen_pmin[g], net.gen_pmax[g]) for g in problem.gen_ids]
    if with_shed:
        bounds += [(0.0, problem.load[i]) for i in range(n_b)]
    bounds += [(0.0, 2.0 * lim) for lim in problem.limits]

    c = np.zeros(n_var)
    if with_shed:
        c[:n_g] = EPS_COST * net.gen_cost[problem.gen_ids]
        c[n_g : n_g + n_s] = 1.0
    else:
        c[:n_g] = net.gen_cost[problem.gen_ids]

    try:
        sol = solve_lp(A, b, c, bounds)
    except LpInfeasibleError:
        if with_shed and np.any(net.gen_pmin[problem.gen_ids] > 0):
            # A pmin floor can exceed what the island can absorb; treat
            # minimum output as soft in that corner (units switch off).
            bounds[:n_g] = [(0.0, net.gen_pmax[g]) for g in problem.gen_ids]
            sol = solve_lp(A, b, c, bounds)
        else:
            raise
    gen = sol.x[:n_g]
    shed_vals = sol.x[n_g : n_g + n_s] if with_shed else np.zeros(n_b)
    return gen, np.clip(shed_vals, 0.0, None)
