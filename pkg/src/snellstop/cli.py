"""Command-line front end.

Exit codes: 0 success, 1 invariant failure, 2 configuration error, 3 engine error.
The default output directory comes from ``$SNELLSTOP_OUT`` (else ``./out``).
"""
from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import lsmc, oracle, reward, snell, stopping
from .errors import MalformedSpec, ModelTooLarge, NegativeReward, ParameterOutOfRange, SnellError
from .io import read_structured, write_csv
from .model import (
    Arithmetic,
    Model,
    TimeGrid,
    build_binomial,
    build_crr,
    build_from_spec,
    expectation_under_rule,
    time_distribution,
)

OUT_ENV = "SNELLSTOP_OUT"
SUBCOMMANDS = ("price", "verify", "oracle", "converge", "epsilon", "lsmc", "region")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    model: dict
    reward: dict
    run: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = read_structured(path)
        except MalformedSpec as exc:
            raise ConfigError(str(exc)) from None
        unknown = set(raw) - {"model", "reward", "run", "output"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "model" not in raw:
            raise ConfigError("config needs a [model] section")
        return cls(dict(raw["model"]), dict(raw.get("reward", {})), dict(raw.get("run", {})),
                   dict(raw.get("output", {})), path.parent)


def _arithmetic(cfg: ExperimentConfig, override):
    return Arithmetic((override or cfg.run.get("arithmetic") or "rational").lower())


def build_model(cfg: ExperimentConfig, arithmetic_override=None, n_steps=None) -> Model:
    m = dict(cfg.model)
    builder = m.pop("builder", "binomial")
    try:
        if builder == "binomial":
            return build_binomial(m["s0"], m["up"], m["down"], m["p"],
                                  int(n_steps or m["n_steps"]), m.get("horizon", 1),
                                  m.get("kind", "exact_tree"), _arithmetic(cfg, arithmetic_override))
        if builder == "crr":
            return build_crr(float(m["s0"]), float(m["volatility"]), float(m.get("rate", 0.0)),
                             float(m.get("horizon", 1.0)), int(n_steps or m["n_steps"]),
                             m.get("kind", "markov_lattice"), float(m.get("dividend", 0.0)))
        if builder == "spec":
            spec_path = cfg.base_dir / m["spec_file"]
            return build_from_spec(read_structured(spec_path))
    except KeyError as exc:
        raise ConfigError(f"[model] is missing {exc}") from None
    raise ConfigError(f"unknown model builder {builder!r}")


def build_reward(cfg: ExperimentConfig, model: Model, payoff=None) -> reward.RewardFamily:
    r = dict(cfg.reward)
    name = payoff or r.pop("payoff", None)
    r.pop("payoff", None)
    if name is None:
        raise ConfigError("[reward] needs a payoff name")
    return reward.by_name(model, name, **r)


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.output.get("dir") or os.environ.get(OUT_ENV) or "out")


def _csv_on(cfg) -> bool:
    return bool(cfg.output.get("csv", True))


class _Printer:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _label(model, i):
    return model.nodes[i].label


def _dist_rows(name, dist):
    return [(name, t, m) for t, m in sorted(dist.items())]


def cmd_price(args, cfg, say) -> int:
    model = build_model(cfg, args.arithmetic)
    phi = build_reward(cfg, model)
    res = snell.compute(model, phi)
    lo = stopping.minimal_optimal(res)
    hi = stopping.maximal_optimal(res)
    say(f"v(root) = {res.value}")
    say(f"E[phi(theta_*)] = {expectation_under_rule(model, lo, phi)}")
    say(f"E[phi(theta_check)] = {expectation_under_rule(model, hi, phi)}")
    d_lo, d_hi = time_distribution(model, lo), time_distribution(model, hi)
    for name, d in (("theta_*", d_lo), ("theta_check", d_hi)):
        support = [(t, m) for t, m in d.items() if m]
        if len(support) <= 12:
            say(f"{name} distribution: " + ", ".join(f"t={t}:{m}" for t, m in support))
        else:
            mean = sum((t * m for t, m in support), 0)
            say(f"{name} distribution: {len(support)} levels, mean level {float(mean):.4g}")
    if _csv_on(cfg):
        out = _out_dir(args, cfg)
        doob = snell.doob_decompose(model, res) if model.is_tree else None
        rows = []
        for nd in model.nodes:
            i = nd.id
            rows.append((nd.label, nd.level, nd.state, phi[i], res.v[i], res.vplus[i],
                         doob.A[i] if doob else None, doob.M[i] if doob else None))
        write_csv(out / "snell_result.csv", "snell_result/v1",
                  ("node", "level", "state", "phi", "v", "vplus", "A", "M"), rows)
        write_csv(out / "rules.csv", "stopping_rules/v1", ("node", "theta_star", "theta_check"),
                  [(nd.label, lo.decision(nd.id).value, hi.decision(nd.id).value)
                   for nd in model.nodes])
        write_csv(out / "time_distribution.csv", "time_distribution/v1", ("rule", "t", "mass"),
                  _dist_rows("theta_star", d_lo) + _dist_rows("theta_check", d_hi))
    return 0


FAULTS = ("envelope", "compensator", "maximal")


def _inject(model, res, doob, hi, fault):
    if fault == "envelope":
        v = list(res.v)
        v[model.root] += 1
        res = snell.SnellResult(model, res.reward, tuple(v), res.vplus)
    elif fault == "compensator" and doob is not None:
        A = list(doob.A)
        A[-1] -= 1
        doob = snell.DoobDecomposition(doob.M, tuple(A))
    elif fault == "maximal":
        stop = list(hi.stop)
        stop[model.root] = not stop[model.root]
        hi = stopping.StoppingRule(tuple(stop))
    return res, doob, hi


def verify_instance(model, phi, fault=None, use_oracle=True) -> tuple:
    """Run every invariant check; returns (reports, notices)."""
    res = snell.compute(model, phi)
    doob = snell.doob_decompose(model, res) if model.is_tree else None
    lo = stopping.minimal_optimal(res)
    hi = stopping.maximal_optimal(res)
    if fault:
        res, doob, hi = _inject(model, res, doob, hi, fault)
    reports = [
        snell.envelope_fixed_point(res),
        snell.vplus_identity_check(res, phi),
        snell.check_supermartingale(model, res.v),
        snell.check_dominance(res.v, phi, model.exact),
    ]
    strict = stopping.exercise_region(res)
    reports.append(snell.CheckReport("strict region within exercise region",
                                     sorted(snell.strict_supermartingale_region(res) - strict)))
    v0 = res.value
    for name, rule in (("theta_*", lo), ("theta_check", hi)):
        val = expectation_under_rule(model, rule, phi)
        ok = val == v0 if model.exact else abs(val - v0) <= 1e-9 * max(abs(v0), 1.0)
        reports.append(snell.CheckReport(f"{name} optimal", [] if ok else [model.root],
                                         f"E[phi]={val}, v(root)={v0}"))
        rep = stopping.martingale_interval_check(model, res, None, rule)
        rep.name = f"v martingale before {name}"
        reports.append(rep)
    notices = []
    if doob is not None:
        reports.extend(snell.check_doob(model, res, doob))
        via_a = stopping.first_compensator_increase(model, doob)
        same = stopping.same_stopping_time(model, via_a, hi)
        reports.append(snell.CheckReport("theta_check = first compensator increase",
                                         [] if same else [model.root]))
    if use_oracle:
        if not model.is_tree or not model.exact:
            notices.append("oracle skipped: needs a rational EXACT_TREE")
        else:
            try:
                th = oracle.verify_theorems(model, phi)
                reports.append(snell.CheckReport("oracle sandwich", th.failures and [model.root],
                                                 "; ".join(th.failures)))
            except ModelTooLarge as exc:
                notices.append(f"oracle skipped: {exc}")
    return reports, notices


def cmd_verify(args, cfg, say) -> int:
    fault = cfg.run.get("inject_fault") or None
    if fault and fault not in FAULTS:
        raise ConfigError(f"unknown fault {fault!r}; choose from {FAULTS}")
    use_oracle = bool(cfg.run.get("oracle", True))
    instances = []
    if cfg.model:
        model = build_model(cfg, args.arithmetic)
        instances.append(("configured", model, build_reward(cfg, model)))
    n_corpus = int(cfg.run.get("corpus", 0))
    if n_corpus:
        seed = int(args.seed if args.seed is not None else cfg.run.get("seed", oracle.CORPUS_SEED))
        for k, (m, r) in enumerate(oracle.corpus(n_corpus, seed)):
            instances.append((f"corpus[{k}]", m, r))
    rows, failed = [], []
    for name, model, phi in instances:
        reports, notices = verify_instance(model, phi, fault, use_oracle)
        for note in notices:
            say(f"{name}: {note}")
        for rep in reports:
            rows.append((name, rep.name, "PASS" if rep.passed else "FAIL",
                         " ".join(_label(model, i) for i in rep.violations[:8])))
            if not rep.passed:
                failed.append(f"{name}: {rep.line()}")
    for line in failed:
        print(f"VIOLATED {line}", file=sys.stderr)
    say(f"{len(instances)} instance(s), {len(rows)} checks, {len(failed)} failed")
    if _csv_on(cfg):
        write_csv(_out_dir(args, cfg) / "verify.csv", "verify/v1",
                  ("instance", "check", "verdict", "nodes"), rows)
    return 1 if failed else 0


def cmd_oracle(args, cfg, say) -> int:
    model = build_model(cfg, args.arithmetic or "rational")
    phi = build_reward(cfg, model)
    res = oracle.brute_force(model, phi)
    th = oracle.verify_theorems(model, phi)
    say(f"max_value = {res.max_value}")
    say(f"optimal rules = {res.n_optimal} of {res.rule_count}")
    say(f"sandwich: {'PASS' if th.passed else 'FAIL'}")
    for f in th.failures:
        print(f"VIOLATED {f}", file=sys.stderr)
    if cfg.run.get("dump_optimal") and _csv_on(cfg):
        header = ("rule",) + tuple(_label(model, i) for i in res.interior)
        rows = [(k,) + tuple(r.decision(i).value for i in res.interior)
                for k, r in enumerate(res.optimal_rules)]
        write_csv(_out_dir(args, cfg) / "optimal_rules.csv", "optimal_rules/v1", header, rows)
    return 0 if th.passed else 1


def _expected_time(model, rule):
    dist = time_distribution(model, rule)
    return sum((m * model.grid.times[t] for t, m in dist.items()), 0)


def region_comparison(model: Model, strike) -> dict:
    """Envelopes and exercise regions of the USC and LSC digitals on one model."""
    usc = reward.digital_usc(model, strike)
    lsc = reward.digital_lsc(model, strike)
    ru, rl = snell.compute(model, usc), snell.compute(model, lsc)
    reg_u, reg_l = stopping.exercise_region(ru), stopping.exercise_region(rl)
    at_k = {nd.id for nd in model.nodes if nd.state == strike}
    return {
        "usc": ru, "lsc": rl,
        "region_usc": reg_u, "region_lsc": reg_l,
        "lsc_not_usc": sorted(reg_l - reg_u),
        "at_strike_not_strict": sorted(i for i in at_k if not (i in reg_u and i not in reg_l)),
        # regions restricted to nodes paying something
        "paying_lsc_not_usc": sorted({i for i in reg_l if lsc[i] > 0}
                                     - {i for i in reg_u if usc[i] > 0}),
    }


def cmd_converge(args, cfg, say) -> int:
    ladder = [int(n) for n in cfg.run.get("refinements", [10, 20, 40, 80, 160])]
    strike = float(cfg.reward.get("strike", cfg.model.get("s0")))
    rows = []
    all_contained = True
    previous = None
    for n in ladder:
        model = build_model(cfg, "float", n_steps=n)
        cmp_ = region_comparison(model, strike)
        for name in ("usc", "lsc"):
            res = cmp_[name]
            lo, hi = stopping.minimal_optimal(res), stopping.maximal_optimal(res)
            rows.append((f"digital_{name}", n, res.value, _expected_time(model, lo),
                         _expected_time(model, hi)))
        contained = not cmp_["lsc_not_usc"]
        all_contained &= contained
        diff = "" if previous is None else f", |dv| = {abs(cmp_['usc'].value - previous):.3g}"
        previous = cmp_["usc"].value
        say(f"N={n}: v_usc={cmp_['usc'].value:.6g} v_lsc={cmp_['lsc'].value:.6g}{diff}; "
            f"region_usc >= region_lsc: {contained} ({len(cmp_['lsc_not_usc'])} LSC-only nodes); "
            f"paying regions nested: {not cmp_['paying_lsc_not_usc']}")
    if _csv_on(cfg):
        write_csv(_out_dir(args, cfg) / "converge.csv", "converge/v1",
                  ("payoff", "N", "v_root", "E_theta_star", "E_theta_check"), rows)
    return 0


def cmd_epsilon(args, cfg, say) -> int:
    model = build_model(cfg, args.arithmetic)
    phi = build_reward(cfg, model)
    res = snell.compute(model, phi)
    kind = stopping.EpsilonKind(cfg.run.get("mode", "multiplicative"))
    eps_list = [Fraction(str(e)) if model.exact else float(e)
                for e in cfg.run.get("epsilons", [0.5, 0.1, 0.01])]
    eps0 = stopping.epsilon_threshold(res, phi, kind)
    lo = stopping.minimal_optimal(res)
    d_lo = time_distribution(model, lo)
    v0 = res.value
    say(f"v(root) = {v0}; collapse threshold eps0 = {eps0} (theta_eps = theta_* for eps < eps0)")
    rows, dist_rows, ok = [], [], True
    for eps in eps_list:
        rule = stopping.epsilon_optimal(res, phi, stopping.EpsilonMode(kind, eps))
        val = expectation_under_rule(model, rule, phi)
        bound = (1 - eps) * v0 if kind is stopping.EpsilonKind.MULTIPLICATIVE else v0 - eps
        good = val >= bound
        ok &= good
        d = time_distribution(model, rule)
        collapsed = d == d_lo if eps < eps0 else None
        rows.append((eps, val, bound, good, collapsed))
        dist_rows.extend(_dist_rows(str(eps), d))
        say(f"eps={eps}: value={val} bound={bound} guarantee={'ok' if good else 'FAIL'}"
            + ("" if collapsed is None else f" equals theta_*: {collapsed}"))
    if _csv_on(cfg):
        out = _out_dir(args, cfg)
        write_csv(out / "epsilon.csv", "epsilon/v1",
                  ("epsilon", "value", "bound", "guarantee_ok", "equals_theta_star"), rows)
        write_csv(out / "epsilon_distribution.csv", "time_distribution/v1",
                  ("epsilon", "t", "mass"), dist_rows + _dist_rows("theta_star", d_lo))
    return 0 if ok else 1


def cmd_lsmc(args, cfg, say) -> int:
    m, r, run = cfg.model, cfg.reward, cfg.run
    try:
        s0, vol, rate = float(m["s0"]), float(m["volatility"]), float(m.get("rate", 0.0))
        horizon, n_steps = float(m.get("horizon", 1.0)), int(m["n_steps"])
        strike = float(r["strike"])
    except KeyError as exc:
        raise ConfigError(f"lsmc config is missing {exc}") from None
    kind = r.get("payoff", "put")
    seed = int(args.seed if args.seed is not None else run.get("seed", 1))
    eval_seed = int(run.get("eval_seed", seed + 1))
    grid = TimeGrid.uniform(n_steps, horizon)
    f = reward.Discounted(reward.Payoff(kind, strike), rate, grid.times)
    fit_ens = lsmc.simulate_gbm(s0, rate, vol, grid, int(run.get("fit_paths", 100_000)), seed)
    policy = lsmc.fit_policy(fit_ens, f, int(run.get("basis_degree", 3)))
    ev_ens = lsmc.simulate_gbm(s0, rate, vol, grid, int(run.get("eval_paths", 100_000)), eval_seed)
    est = lsmc.policy_value(ev_ens, policy, f)
    ref = lsmc.bermudan_lattice_value(s0, strike, rate, vol, horizon, n_steps,
                                      int(run.get("lattice_substeps", 10)), kind)
    cmp_ = lsmc.compare_to_lattice(est, ref)
    say(f"estimate = {est[0]:.6f} +/- {est[1]:.6f}; lattice = {ref:.6f}; "
        f"relative gap = {cmp_.relative_gap:.4%}; verdict = {cmp_.verdict}")
    if kind.startswith("digital"):
        say("note: regression smooths the discontinuous payoff; only the lower bound is asserted")
    if _csv_on(cfg):
        out = _out_dir(args, cfg)
        deg = policy.basis_degree
        coef_rows = [(t,) + (tuple(c) if c is not None else ("",) * (deg + 1))
                     for t, c in enumerate(policy.coefficients)]
        write_csv(out / "lsmc_coefficients.csv", "lsmc_coefficients/v1",
                  ("t",) + tuple(f"c{k}" for k in range(deg + 1)), coef_rows)
        write_csv(out / "lsmc_summary.csv", "lsmc_summary/v1",
                  ("estimate", "stderr", "lattice_ref", "verdict"),
                  [(est[0], est[1], ref, cmp_.verdict)])
    return 1 if cmp_.flagged else 0


def cmd_region(args, cfg, say) -> int:
    model = build_model(cfg, args.arithmetic)
    phi = build_reward(cfg, model)
    res = snell.compute(model, phi)
    ex = stopping.exercise_region(res)
    strict = snell.strict_supermartingale_region(res)
    eq_plus = snell.vplus_equal_region(res)
    say(f"exercise region: {len(ex)} nodes; strict supermartingale nodes: {len(strict)}; "
        f"v = vplus at {len(eq_plus)} nodes, v > vplus at {len(model) - len(eq_plus)}")
    if _csv_on(cfg):
        write_csv(_out_dir(args, cfg) / "region.csv", "region/v1",
                  ("node", "level", "state", "exercise", "strict", "v_eq_vplus"),
                  [(nd.label, nd.level, nd.state, int(nd.id in ex), int(nd.id in strict),
                    int(nd.id in eq_plus)) for nd in model.nodes])
    return 0


COMMANDS = {
    "price": cmd_price, "verify": cmd_verify, "oracle": cmd_oracle, "converge": cmd_converge,
    "epsilon": cmd_epsilon, "lsmc": cmd_lsmc, "region": cmd_region,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snellstop", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    parser.add_argument("--arithmetic", choices=("rational", "float"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    say = _Printer(args.quiet)
    try:
        cfg = ExperimentConfig.load(args.config)
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            return COMMANDS[args.command](args, cfg, say)
    except (ConfigError, MalformedSpec, ParameterOutOfRange, NegativeReward) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SnellError as exc:
        print(f"engine error [{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        # bad enum names or value types coming from the config
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
