import numpy as np
from qcrit.mesh import build_mesh_1d, build_mesh_2d, make_exhaustion
from qcrit.qcore import PotentialField
from qcrit.green import green_function, minimal_growth_solution

# 2D unit square, p = n = 2, pole at center: log-type blowup, Green exists
m2 = build_mesh_2d(0.0, 0.0, 1.0, 1.0, 64, 64)
res = green_function(m2, p=2.0, x0=(0.5, 0.5), levels=8)
print("2D verdict:", res.verdict, "| crit:", res.criticality["verdict"])
p = res.profile
print("  class:", p.classification, "log_branch:", p.fit["log_branch"],
      "growth:", round(p.fit["growth"], 3), "harnack max:", round(p.harnack.max(), 3))
print("  log slope per e:", p.fit["log_slope_per_e"], "(1/2pi =", 1 / (2 * np.pi), ")")
print("  flux:", np.round([f for f in res.normalization["pole_flux"] if f is not None], 4))
print("  stabilized:", res.trace["stabilized"], np.round(res.trace["sup_diffs"], 5))

# critical line family: no Green function
sched = make_exhaustion("interval_growing", {"center": 0.0, "radius0": 2.0, "h": 0.125,
                                             "growth": "geometric", "factor": 2.0, "count": 8})
resl = green_function(sched, p=2.0)
print("line verdict:", resl.verdict, "| crit:", resl.criticality["verdict"])
print("  flux:", np.round([f for f in resl.normalization["pole_flux"] if f is not None], 5))
print("  flux_limit:", resl.normalization["flux_limit"])
print("  profile:", resl.profile.classification if resl.profile else None, "msg:", resl.message)

# scaling covariance: R=2, V_R(x) = R^p V(Rx), x1-normalized limits match at matching nodes
m1 = build_mesh_1d(0.0, 1.0, 512)
mR = build_mesh_1d(0.0, 2.0, 512)
V1 = PotentialField.radial_power(5.0, 1.0)
VR = PotentialField.radial_power(5.0 * 2.0 ** 3, 1.0)
u1, t1 = minimal_growth_solution(m1, 2.0, V=V1, x0=0.5, levels=6)
uR, tR = minimal_growth_solution(mR, 2.0, V=VR, x0=1.0, x1=0.5, levels=6,
                                 source_radius=2 * t1["source_radius"])
print("covariance sup err:", np.abs(u1.values - uR.values).max())

# reference point inside the source region -> error
try:
    minimal_growth_solution(m1, 2.0, x0=0.5, x1=0.5)
    print("x0=x1: NO ERROR (bad)")
except ValueError as e:
    print("x0=x1 ->", e)
