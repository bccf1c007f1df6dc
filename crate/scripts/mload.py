import re, numpy as np
def load(path):
    t = open(path).read()
    ppc = {'version': '2'}
    ppc['baseMVA'] = float(re.search(r'mpc\.baseMVA\s*=\s*([\d.eE+-]+)', t).group(1))
    for name in ['bus','gen','branch','gencost']:
        m = re.search(r'mpc\.%s\s*=\s*\[(.*?)\];' % name, t, re.S)
        rows = []
        for line in m.group(1).split('\n'):
            line = line.split('%')[0].strip().rstrip(';').strip()
            if line: rows.append([float(x) for x in line.split()])
        ppc[name] = np.array(rows)
    return ppc
