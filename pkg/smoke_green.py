import numpy as np
from qcrit.mesh import build_mesh_1d, make_exhaustion, GridFunction
from qcrit.green import green_function, minimal_growth_solution, classify_singularity

# 1) 1D (0,1), p=2, pole at 1/2: Green shape x(1-x0), x0(1-x), pole value 1/4
m = build_mesh_1d(0.0, 1.0, 512)
res = green_function(m, p=2.0, x0=0.5, levels=8)
print("p=2 verdict:", res.verdict, "| crit:", res.criticality["verdict"])
print("  flux seq:", np.round(res.normalization["pole_flux"], 6))
print("  pole value:", res.normalization.get("pole_value"), "(want 0.25)")
print("  profile:", res.profile.classification, "limit", res.profile.limit, "ci", res.profile.limit_ci)
G = res.G
x = G.mesh.coords2[:, 0]
exact = np.where(x <= 0.5, x * 0.5, 0.5 * (1 - x))
src_hi = res.trace["last_window"][1]
sel = np.abs(x - 0.5) >= 1.3 * src_hi
err = np.abs(G.values[sel] - exact[sel]).max() / exact.max()
print("  shape err (outside window):", err)
print("  stabilized:", res.trace["stabilized"], "sup_diffs:", np.round(res.trace["sup_diffs"], 5))

# 2) p=3: pole value 2^{-3/2}
res3 = green_function(m, p=3.0, x0=0.5, levels=8)
print("p=3 verdict:", res3.verdict)
print("  flux seq:", np.round([f for f in res3.normalization["pole_flux"] if f is not None], 4))
print("  pole value:", res3.normalization.get("pole_value"), "(want", 2**-1.5, ")")

# 3) classify: radial n=3 annulus, u = 1/r with pole at the origin -> blowup slope -1
sched = make_exhaustion("annulus", {"growth": 6.0, "nodes_per_log": 48, "count": 3, "ambient_n": 3})
mm = sched.meshes[-1]
r = mm.coords2[:, 0]
prof = classify_singularity(GridFunction(mm, 1.0 / r), np.array([0.0]))
print("1/r:", prof.classification, "slope", prof.slope, "growth", prof.fit["growth"])
prof1 = classify_singularity(GridFunction(mm, np.ones(mm.n_nodes)), np.array([0.0]))
print("const:", prof1.classification, "slope", prof1.slope, "limit", prof1.limit)
