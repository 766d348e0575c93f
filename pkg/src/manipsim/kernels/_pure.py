"""Pure-Python versions of the hot simulation kernels.

These follow ``_core.pyx`` operation for operation (same loop nesting, same
accumulation order) so both backends return bit-identical floats.
"""

import math

import numpy as np


def _slate_probs_into(attrs, exam, exp_no_choice, out):
    n_pos = len(exam)
    n_attr = len(attrs[0]) if n_pos else 0
    for k in range(n_pos):
        out[k] = 0.0
    for mask in range(1, 1 << n_pos):
        weight = 1.0
        for k in range(n_pos):
            if (mask >> k) & 1:
                weight *= exam[k]
            else:
                weight *= 1.0 - exam[k]
        if weight == 0.0:
            continue
        seen = [k for k in range(n_pos) if (mask >> k) & 1]
        if len(seen) == 1:
            k = seen[0]
            util = 0.0
            for t in range(n_attr):
                util -= attrs[k][t]
            num = math.exp(util)
            out[k] += weight * (num / (exp_no_choice + num))
            continue
        nums = []
        denom = exp_no_choice
        for a in seen:
            regret = 0.0
            for b in seen:
                if b == a:
                    continue
                for t in range(n_attr):
                    diff = attrs[a][t] - attrs[b][t]
                    if diff > 0.0:
                        regret += diff
            num = math.exp(-regret)
            nums.append(num)
            denom += num
        for idx, a in enumerate(seen):
            out[a] += weight * (nums[idx] / denom)


def rrm_slate_probs(attrs, exam, log_no_choice):
    """Per-position click probabilities of one slate under the RRM model.

    ``attrs`` is ``(K, n_attr)``, ``exam`` the ``K`` examination probabilities.
    """
    attrs = np.asarray(attrs, dtype=np.float64).tolist()
    exam = [float(x) for x in exam]
    out = [0.0] * len(exam)
    _slate_probs_into(attrs, exam, math.exp(log_no_choice), out)
    return np.array(out, dtype=np.float64)


def rrm_batch_slate_probs(attrs, exam, log_no_choice):
    """Vectorised over a leading batch axis: ``attrs`` is ``(B, K, n_attr)``."""
    attrs = np.asarray(attrs, dtype=np.float64)
    exam = [float(x) for x in exam]
    exp_l = math.exp(log_no_choice)
    out = np.zeros(attrs.shape[:2], dtype=np.float64)
    row = [0.0] * len(exam)
    for b, slate in enumerate(attrs.tolist()):
        _slate_probs_into(slate, exam, exp_l, row)
        out[b] = row
    return out


def planner_values(prefs, qualities, budget, horizon, cost_base, quality_bonus,
                   cost_floor, sharpness, drift):
    """Expected cumulative clicks of repeatedly showing each candidate's topic.

    ``prefs[i]`` is the user's current preference for candidate ``i``'s topic
    and ``qualities[i]`` the mean quality of that topic.
    """
    n = len(prefs)
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        pref = float(prefs[i])
        left = float(budget)
        cost_click = cost_base - quality_bonus * float(qualities[i])
        if cost_click < cost_floor:
            cost_click = cost_floor
        total = 0.0
        for _ in range(horizon):
            p = 1.0 / (1.0 + math.exp(-sharpness * (pref - 0.5)))
            total += p
            left -= p * cost_click + (1.0 - p) * cost_base
            pref += p * drift * (1.0 - pref)
            if left <= 0.0:
                break
        out[i] = total
    return out
