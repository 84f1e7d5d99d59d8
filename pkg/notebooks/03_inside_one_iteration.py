# %% [markdown]
# # Inside one iteration
#
# An outer iteration has three parts: a linear solve for the potential, a
# node-by-node proximal step, and a multiplier update.  This script opens up
# the first two on small examples.

# %%
import numpy as np

from mftc import CostModel, build_geometry
from mftc.krylov import KrylovConfig, bicgstab_solve, make_preconditioner, step1_operator
from mftc.pointwise import Branch, objective_w, solve_node

rng = np.random.default_rng(0)

# %% [markdown]
# ## The linear solve
#
# Step 1 is a symmetric positive definite space-time elliptic problem.  Plain
# BiCGStab needs a number of iterations that grows with the grid; the
# FFT-based preconditioner is exact without obstacles and stays cheap with
# them.

# %%
for kind, obstacles in [("periodic", []), ("box", []), ("box", [(0.4, 0.6, 0.4, 0.6)])]:
    g = build_geometry(kind, 20, 20, obstacles=obstacles)
    op = step1_operator(g, r=1.0)
    b = rng.standard_normal(op.shape) * g.node_mask
    counts = []
    for pre in ("none", "jacobi", "spectral"):
        _, its, _ = bicgstab_solve(op, b, config=KrylovConfig(preconditioner=pre),
                                   precond=make_preconditioner(op, pre))
        counts.append(f"{pre}={its}")
    print(f"{kind:8s} obstacles={len(obstacles)}  iterations: {', '.join(counts)}")

# %% [markdown]
# ## The proximal step at one node
#
# At each space-time node we maximise a concave function W of a density and
# four one-sided momenta.  The maximiser lies on one of three branches:
# zero density, an interior root found by bisection, or the left end of
# the admissible interval.

# %%
cost = CostModel(alpha=0.5, beta=2.0, lam=1.0)
examples = {
    "nothing to transport": (np.zeros(5), np.array([1.0, 0, 0, 0, 0])),
    "density, no gradient": (np.array([3.0, 0, 0, 0, 0]), np.zeros(5)),
    "density and a push": (np.array([1.0, 0.5, -0.2, 0.1, 0.0]), np.array([-0.3, -1.0, 0.4, 0.2, 0.0])),
}
for label, (sigma, lphi) in examples.items():
    out = solve_node(sigma, lphi, 1.0, cost)
    print(f"{label:22s} branch={Branch(out.branch).name:13s} "
          f"m={out.sigma[0]:.4f} W={objective_w(out.sigma, sigma, lphi, 1.0, cost):.6f}")

# %% [markdown]
# The returned point beats every feasible point on a coarse grid around it:

# %%
sigma, lphi = examples["density and a push"]
best = solve_node(sigma, lphi, 1.0, cost).sigma
w_best = objective_w(best, sigma, lphi, 1.0, cost)
signs = np.array([1, 1, -1, 1, -1])
trial = best + rng.normal(scale=0.05, size=(2000, 5))
trial = np.where(signs > 0, np.maximum(trial, 0), np.minimum(trial, 0))
values = [objective_w(t, sigma, lphi, 1.0, cost) for t in trial]
print(f"W at the maximiser {w_best:.8f}; best random neighbour {max(values):.8f}")
