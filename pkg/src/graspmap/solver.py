"""Factor-graph assembly and Levenberg-Marquardt optimization.

The state is the list of keyframe gripper poses T_0..T_n plus one global
log-scale variable. Each iteration linearizes every factor about the current
estimate, solves the damped normal equations with a dense Cholesky
factorization, and applies the step through the retraction

    T_k <- T_k @ exp(delta_k),      log s <- log s + delta_s.

Damping follows the classic Marquardt schedule: multiply lambda by 10 when a
step increases the cost, divide by 10 when it is accepted. Evaluation order is
fixed (factors in insertion order, dense algebra), so repeated runs on the
same graph produce bit-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IndexMismatch, SingularNormalEquations
from .factors import (Factor, FkFactor, McFactor, PriorFactor, ScaleVar,
                      factor_cost, factor_info_diag, factor_jacobians,
                      factor_residual)
from .geometry import (Pose, Rotation, Twist, compose, pose_from_seven,
                       pose_to_seven, se3_exp)


@dataclass
class SolveOptions:
    """Levenberg-Marquardt knobs; the defaults suit graphs of tens of keyframes."""

    max_iter: int = 100
    rel_tol: float = 1e-8
    # grad_tol sits near machine noise on purpose: the information values here
    # are 1e-3..1e-4, so gradients run ~1e6 smaller than in a unit-weight
    # problem and a looser floor would stop well short of the minimum
    grad_tol: float = 1e-14
    initial_lambda: float = 1e-4
    lambda_max: float = 1e8


@dataclass
class SolveReport:
    """Outcome of one optimize() call; step_costs holds accepted costs only."""

    initial_cost: float
    final_cost: float
    iterations: int
    converged: bool
    step_costs: list[float] = field(default_factory=list)


class FactorGraph:
    """Poses, scale, and factors; exactly one prior anchors pose 0 and the scale."""

    def __init__(self, prior: PriorFactor, t0: Pose | None = None,
                 scale: ScaleVar | None = None):
        self.poses: list[Pose] = [prior.pose if t0 is None else t0]
        self.scale: ScaleVar = (ScaleVar.from_value(prior.scale)
                                if scale is None else scale)
        self.factors: list[Factor] = [prior]

    @property
    def num_poses(self) -> int:
        return len(self.poses)

    def add_keyframe(self, fk: FkFactor, mc: McFactor,
                     pose_init: Pose | None = None) -> None:
        """Append pose i with its two measurement factors.

        The new pose starts at the previous estimate composed with the FK
        delta (dead reckoning) unless an explicit initial value is given.
        """
        i = len(self.poses)
        if fk.i != i or mc.i != i:
            raise IndexMismatch(
                f"graph has poses 0..{i - 1}; next factors must use index {i}, "
                f"got fk.i={fk.i}, mc.i={mc.i}")
        if pose_init is None:
            pose_init = compose(self.poses[-1], fk.delta)
        self.poses.append(pose_init)
        self.factors.append(fk)
        self.factors.append(mc)

    def validate(self) -> None:
        priors = [f for f in self.factors if isinstance(f, PriorFactor)]
        if len(priors) != 1:
            raise IndexMismatch(f"graph must hold exactly one prior, found {len(priors)}")
        for f in self.factors:
            if isinstance(f, (FkFactor, McFactor)) and not (1 <= f.i < len(self.poses)):
                raise IndexMismatch(
                    f"factor index {f.i} out of range for {len(self.poses)} poses")

    def total_cost(self) -> float:
        """Sum of squared Mahalanobis residuals over all factors (no 1/2 prefactor)."""
        return sum(
            factor_cost(factor_residual(f, self.poses, self.scale), factor_info_diag(f))
            for f in self.factors)

    # -- linear algebra -------------------------------------------------------

    def _var_slice(self, key) -> slice:
        if key[0] == "pose":
            return slice(6 * key[1], 6 * key[1] + 6)
        return slice(6 * len(self.poses), 6 * len(self.poses) + 1)

    def _linearize(self, poses, scale):
        """Gauss-Newton Hessian, gradient, and cost at the given state."""
        dim = 6 * len(poses) + 1
        h = np.zeros((dim, dim))
        g = np.zeros(dim)
        cost = 0.0
        for f in self.factors:
            r = factor_residual(f, poses, scale)
            lam = factor_info_diag(f)
            wr = lam * r
            cost += float(r @ wr)
            blocks = [(self._var_slice(k), j.reshape(r.size, -1))
                      for k, j in factor_jacobians(f, poses, scale).items()]
            for sl_a, j_a in blocks:
                g[sl_a] += j_a.T @ wr
                wj_a = lam[:, None] * j_a
                for sl_b, j_b in blocks:
                    h[sl_a, sl_b] += wj_a.T @ j_b
        return h, g, cost

    def _retract(self, poses, scale, delta):
        new_poses = [compose(p, se3_exp(Twist(delta[6 * k:6 * k + 3],
                                              delta[6 * k + 3:6 * k + 6])))
                     for k, p in enumerate(poses)]
        new_scale = ScaleVar(scale.log_value + float(delta[-1]))
        return new_poses, new_scale

    def _cost_at(self, poses, scale) -> float:
        return sum(
            factor_cost(factor_residual(f, poses, scale), factor_info_diag(f))
            for f in self.factors)

    # -- optimization ----------------------------------------------------------

    def optimize(self, options: SolveOptions | None = None) -> SolveReport:
        """Minimize the total cost in place; returns the iteration report."""
        self.validate()
        opts = options or SolveOptions()
        poses, scale = list(self.poses), self.scale
        h, g, cost = self._linearize(poses, scale)
        initial_cost = cost
        step_costs: list[float] = []
        converged = False
        lam = opts.initial_lambda
        iterations = 0

        for _ in range(opts.max_iter):
            if np.max(np.abs(g)) < opts.grad_tol:
                converged = True
                break
            damping = np.diag(h).copy()
            accepted = False
            while True:
                try:
                    cf = scipy.linalg.cho_factor(h + lam * np.diag(damping),
                                                 lower=True, check_finite=False)
                except scipy.linalg.LinAlgError:
                    lam *= 10.0
                    if lam > opts.lambda_max:
                        raise SingularNormalEquations(
                            f"normal equations not positive-definite at lambda={lam:.1e}")
                    continue
                delta = scipy.linalg.cho_solve(cf, -g, check_finite=False)
                cand_poses, cand_scale = self._retract(poses, scale, delta)
                cand_cost = self._cost_at(cand_poses, cand_scale)
                if cand_cost <= cost:
                    accepted = True
                    rel_decrease = (cost - cand_cost) / cost if cost > 0.0 else 0.0
                    poses, scale, cost = cand_poses, cand_scale, cand_cost
                    step_costs.append(cost)
                    iterations += 1
                    lam = max(lam / 10.0, 1e-15)
                    if rel_decrease < opts.rel_tol:
                        converged = True
                    break
                lam *= 10.0
                if lam > opts.lambda_max:
                    break
            if not accepted:
                # No step of any admissible length lowers the cost: the
                # relative decrease is zero, which meets rel_tol.
                converged = True
                break
            if converged:
                break
            h, g, cost = self._linearize(poses, scale)

        self.poses, self.scale = poses, scale
        return SolveReport(initial_cost=initial_cost,
                           final_cost=cost,
                           iterations=iterations,
                           converged=converged,
                           step_costs=step_costs)

    def marginal_scale_stddev(self) -> float:
        """Marginal standard deviation of log s from the Gauss-Newton Hessian.

        Large values flag trajectories whose translations do not constrain the
        map scale (the estimate then just reproduces the prior).
        """
        h, _, _ = self._linearize(self.poses, self.scale)
        try:
            cf = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise SingularNormalEquations("Gauss-Newton Hessian is singular") from exc
        e = np.zeros(h.shape[0])
        e[-1] = 1.0
        var = float(scipy.linalg.cho_solve(cf, e, check_finite=False)[-1])
        if var <= 0.0:
            raise SingularNormalEquations("non-positive marginal variance for log s")
        return float(np.sqrt(var))


# --- graph file format ----------------------------------------------------------
#
# Plain text, one record per line, '#' comments. Numbers use repr-precision so
# save/load round-trips are exact.
#
#   pose <i> tx ty tz qw qx qy qz
#   scale <value>
#   prior tx ty tz qw qx qy qz <scale> <pose_info x6> <scale_info>
#   fk <i> tx ty tz qw qx qy qz <info x6>
#   mc <i> dtx dty dtz qw qx qy qz <info x6> aligned|literal


def _fmt(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def save_graph(path, graph: FactorGraph) -> None:
    lines = ["# factor graph: poses, scale, factors"]
    for i, p in enumerate(graph.poses):
        lines.append(f"pose {i} {_fmt(pose_to_seven(p))}")
    lines.append(f"scale {graph.scale.value:.17g}")
    for f in graph.factors:
        if isinstance(f, PriorFactor):
            lines.append("prior " + _fmt(pose_to_seven(f.pose))
                         + f" {f.scale:.17g} " + _fmt(f.pose_info)
                         + f" {f.scale_info:.17g}")
        elif isinstance(f, FkFactor):
            lines.append(f"fk {f.i} " + _fmt(pose_to_seven(f.delta))
                         + " " + _fmt(f.info))
        elif isinstance(f, McFactor):
            tag = "aligned" if f.frame_aligned else "literal"
            lines.append(f"mc {f.i} " + _fmt(f.delta_trans) + " "
                         + _fmt(f.delta_rot.quat) + " " + _fmt(f.info) + f" {tag}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path) -> FactorGraph:
    poses: dict[int, Pose] = {}
    scale_value: float | None = None
    prior: PriorFactor | None = None
    fks: dict[int, FkFactor] = {}
    mcs: dict[int, McFactor] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                kind = tok[0]
                if kind == "pose":
                    poses[int(tok[1])] = pose_from_seven([float(v) for v in tok[2:9]])
                elif kind == "scale":
                    scale_value = float(tok[1])
                elif kind == "prior":
                    vals = [float(v) for v in tok[1:]]
                    prior = PriorFactor(pose=pose_from_seven(vals[0:7]),
                                        scale=vals[7],
                                        pose_info=np.array(vals[8:14]),
                                        scale_info=vals[14])
                elif kind == "fk":
                    i = int(tok[1])
                    vals = [float(v) for v in tok[2:]]
                    fks[i] = FkFactor(i, pose_from_seven(vals[0:7]),
                                      info=np.array(vals[7:13]))
                elif kind == "mc":
                    i = int(tok[1])
                    vals = [float(v) for v in tok[2:15]]
                    mcs[i] = McFactor(i, Rotation(np.array(vals[3:7])),
                                      np.array(vals[0:3]),
                                      info=np.array(vals[7:13]),
                                      frame_aligned=(tok[15] == "aligned"))
                else:
                    raise ValueError(f"unknown record '{kind}'")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad graph record: {exc}") from exc
    if prior is None or scale_value is None or 0 not in poses:
        raise ValueError(f"{path}: graph file needs a prior, a scale, and pose 0")
    n = len(poses)
    if sorted(poses) != list(range(n)) or sorted(fks) != list(range(1, n)) \
            or sorted(mcs) != list(range(1, n)):
        raise ValueError(f"{path}: poses/factors must cover indices 0..{n - 1} contiguously")
    graph = FactorGraph(prior, t0=poses[0], scale=ScaleVar.from_value(scale_value))
    for i in range(1, n):
        graph.add_keyframe(fks[i], mcs[i], pose_init=poses[i])
    return graph


# --- solve report file -----------------------------------------------------------


def save_report(path, report: SolveReport) -> None:
    lines = [
        f"initial_cost {report.initial_cost:.17g}",
        f"final_cost {report.final_cost:.17g}",
        f"iterations {report.iterations}",
        f"converged {'true' if report.converged else 'false'}",
    ]
    lines += [f"step_cost {k} {c:.17g}" for k, c in enumerate(report.step_costs)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_report(path) -> SolveReport:
    fields: dict[str, str] = {}
    steps: dict[int, float] = {}
    with open(path) as fh:
        for raw in fh:
            tok = raw.split()
            if not tok:
                continue
            if tok[0] == "step_cost":
                steps[int(tok[1])] = float(tok[2])
            else:
                fields[tok[0]] = tok[1]
    return SolveReport(initial_cost=float(fields["initial_cost"]),
                       final_cost=float(fields["final_cost"]),
                       iterations=int(fields["iterations"]),
                       converged=fields["converged"] == "true",
                       step_costs=[steps[k] for k in sorted(steps)])
