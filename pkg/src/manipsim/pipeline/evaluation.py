"""Stage 3/4: online interaction with a policy and the metrics computed from it."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..metrics import (MetricReport, favorite_set, fctr, maniscore, nanmean, position_stats,
                       preference_list, rbo_similarity)
from ..oracles import Strategy
from ..types import GLOBAL_QUERY, InteractionLog, PreferenceTable, UserState
from .stages import collect, stream_tag
from .world import EVAL, World, compute_initial_preferences, heldout_users


def evaluation_population(world: World, prefs: PreferenceTable) -> tuple[list[UserState], PreferenceTable]:
    if world.cfg.run.eval_population == "heldout":
        users = heldout_users(world)
        return users, compute_initial_preferences(users, world.docs, world.model)
    return world.fresh_users(), prefs


def evaluate(world: World, prefs: PreferenceTable, policy: Strategy, name: str | None = None,
             mix_ratio: float | None = None) -> tuple[InteractionLog, MetricReport]:
    """Let ``policy`` interact with reset users, then score the resulting log."""
    name = name or policy.name
    users, eval_prefs = evaluation_population(world, prefs)
    population = [u.copy() for u in users]
    log = collect(world, users, policy, eval_prefs, world.cfg.run.rounds,
                  (world.seed, EVAL, stream_tag(name)), tag=name)
    report = report_from_log(world, eval_prefs, population, log, name, mix_ratio)
    return log, report


def _state_after(row, model, user: UserState) -> np.ndarray:
    state = UserState(user.user_id, user.u0, np.array(row.hidden_u), user.q, row.hidden_budget,
                      False, list(row.history), user.initial_budget)
    return model.transition(state, row.slate).u


def report_from_log(world: World, prefs: PreferenceTable, users: Sequence[UserState],
                    log: InteractionLog, name: str, mix_ratio: float | None = None) -> MetricReport:
    """All online metrics of an evaluation log; a pure function of its inputs.

    Users count equally: each user's slates are averaged first. In the
    sequential scenario rounds after a user has left count as zero clicks.
    Preference shift compares each user's top documents at round 0 with
    those after their last round.
    """
    cfg, model, docs = world.cfg, world.model, world.docs
    rounds = cfg.run.rounds
    seq = not cfg.is_slate
    by_user = log.by_user()
    all_ids = list(docs.ids)
    fav_k, ps_k, p = cfg.run.favorites_k, cfg.run.ps_k, cfg.run.rbo_p

    pref_cache: dict[bytes, tuple[int, ...]] = {}

    def top_list(u) -> tuple[int, ...]:
        key = np.asarray(u, dtype=np.float64).tobytes()
        if key not in pref_cache:
            pref_cache[key] = preference_list(u, all_ids, model, ps_k)
        return pref_cache[key]

    def favorites_for(user_id: int, query: str) -> tuple[int, ...]:
        ids = all_ids if query == GLOBAL_QUERY else list(docs.for_query(query))
        return favorite_set(ids, prefs.row(user_id, ids), min(fav_k, len(ids)))

    ctr_curve = np.zeros((len(users), rounds))
    fctr_curve = np.full((len(users), rounds), np.nan)
    ps_curve = np.zeros((len(users), rounds))
    user_ctr, user_fctr, user_mani = [], [], []
    n_flagged = 0
    fav_cache: dict[tuple[int, str], tuple[int, ...]] = {}
    for i, user in enumerate(users):
        rows = by_user.get(user.user_id, [])
        base = top_list(user.u0)
        ps_last = 0.0
        clicks_all = clicks_fav = 0.0
        row_fctr, row_mani = [], []
        for row in rows:
            key = (user.user_id, row.query)
            if key not in fav_cache:
                fav_cache[key] = favorites_for(*key)
            fav = fav_cache[key]
            probs = np.asarray(row.slate.click_probs)
            r = row.round - 1
            ctr_curve[i, r] = probs.mean()
            fctr_curve[i, r] = fctr(probs, row.slate.docs, fav)
            clicks_all += probs.sum()
            clicks_fav += probs[[d in fav for d in row.slate.docs]].sum()
            row_fctr.append(fctr_curve[i, r])
            ms = maniscore(row.slate.docs, user.u0, model, fav)
            n_flagged += ms.unbiased_flag
            row_mani.append(ms.score)
            u_after = _state_after(row, model, user)
            ps_last = 1.0 - rbo_similarity(base, top_list(u_after), p, ps_k)
            ps_curve[i, r] = ps_last
        if rows:
            last = rows[-1].round
            ps_curve[i, last:] = ps_last
        if seq:
            user_ctr.append(ctr_curve[i].sum() / rounds if rounds else np.nan)
            user_fctr.append(clicks_fav / clicks_all if clicks_all > 0 else np.nan)
        else:
            user_ctr.append(nanmean(ctr_curve[i, [row.round - 1 for row in rows]]) if rows else np.nan)
            user_fctr.append(nanmean(row_fctr))
        user_mani.append(nanmean(row_mani))
    stats = position_stats(log, prefs, lambda q: all_ids if q == GLOBAL_QUERY else docs.for_query(q))
    final_ps = [ps_curve[i, -1] if rounds else 0.0 for i in range(len(users))]
    if seq:
        ctr_by_round = ctr_curve.mean(axis=0)
    else:
        ctr_by_round = np.array([nanmean(ctr_curve[:, r]) for r in range(rounds)])
    curves = {
        "ctr": [float(x) for x in ctr_by_round],
        "fctr": [nanmean(fctr_curve[:, r]) for r in range(rounds)],
        "ps": [float(x) for x in ps_curve.mean(axis=0)],
    }
    return MetricReport(
        policy=name, scenario=cfg.scenario, mix_ratio=mix_ratio, seed=world.seed,
        ctr=nanmean(user_ctr), fctr=nanmean(user_fctr), maniscore=nanmean(user_mani),
        ps=nanmean(final_ps), favorite_position=stats.favorite_position,
        least_favorite_position=stats.least_favorite_position,
        n_users=len(users), n_rows=len(log), n_flagged=int(n_flagged), curves=curves,
    )
