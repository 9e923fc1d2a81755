"""
Bridge schedule and samplers on a Gaussian toy problem
======================================================

Clean x ~ N(0, 1), noisy y = x + n with n ~ N(0, 1).  With the exact
posterior-mean denoiser the samplers should land around E[x | y] = y / 2.
"""

import numpy as np

from sbse.denoiser import GaussianOracleDenoiser, GaussianToyProblem
from sbse.sampler import SamplerConfig, run_sampler
from sbse.schedule import BridgeSchedule, coeffs, marginal_weights

sched = BridgeSchedule(k=2.6, c=0.40)
print("sigma_T^2 = %.4f" % sched.sigma_T2)
for t in (0.0, 0.25, 0.5, 0.75, 1.0):
    wx, wy, var = marginal_weights(sched, t)
    print("t=%.2f  sigma_t=%.4f  weight on x=%.4f  on y=%.4f  var=%.4f"
          % (t, coeffs(sched, t).sigma_t, wx, wy, var))

problem = GaussianToyProblem(prior_var=1.0, noise_var=1.0)
oracle = GaussianOracleDenoiser(problem, sched)
y = np.full(10_000, 1.3)  # many independent trials of the same observation

# The ODE sampler is deterministic: every trial gives the same answer.
ode = run_sampler(y, oracle, SamplerConfig("ode", 10), sched)
print("ODE, 10 steps:  mean %.4f  std %.2e" % (ode.mean(), ode.std()))

# The SDE sampler spreads the trials out; the spread approaches the
# posterior's (0.5) as the step count grows.
for n in (10, 50, 500):
    sde = run_sampler(y, oracle, SamplerConfig("sde", n, seed=0), sched)
    print("SDE, %3d steps: mean %.4f  var %.4f" % (n, sde.mean(), sde.var()))
print("target mean %.4f, posterior var %.4f" % problem.posterior_given_y(1.3))
