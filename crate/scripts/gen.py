import sys, json, warnings, numpy as np; warnings.filterwarnings('ignore')
from mload import load
from pypower.api import runopf, ppoption
out = sys.argv[2]
ppc = load(sys.argv[1])
opt = ppoption(VERBOSE=0, OUT_ALL=0, PDIPM_FEASTOL=1e-8, PDIPM_GRADTOL=1e-8, PDIPM_COMPTOL=1e-8, PDIPM_COSTTOL=1e-10)
r = runopf(ppc, opt)
assert r['success']
base = r['baseMVA']
bus, gen, br = r['bus'], r['gen'], r['branch']
idx = {int(b[0]): k for k, b in enumerate(bus)}
va = np.deg2rad(bus[:, 8])
worst = 0.0
for b in br:
    if b[10] == 0: continue
    d = np.rad2deg(va[idx[int(b[0])]] - va[idx[int(b[1])]])
    worst = max(worst, d - b[12], b[11] - d)
print(sys.argv[1].split('/')[-1], r['f'], 'angle viol(deg)', worst)
json.dump({
  'objective': r['f'],
  'v': bus[:, 7].tolist(),
  'theta': va.tolist(),
  'pg': (gen[:, 1] / base).tolist(),
  'qg': (gen[:, 2] / base).tolist(),
}, open(out, 'w'), indent=1)
