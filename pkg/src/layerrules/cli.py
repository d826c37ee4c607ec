"""Command-line entry point: ``analyze``, ``prove`` and ``monitor``.

Flags keep their single-dash spelling (``-wd``, ``-layer_name``...). Boolean
flags accept an optional value, so ``-acts``, ``-acts true`` and
``-acts True`` all switch the option on.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 no usable
rules, 10 counterexample found, 11 verifier budget exhausted.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import (EmptySupport, LayerRulesError, MissingLabels,
                     NoRulesForLabel, UnknownLayer)
from .extraction import (INPUT_LAYER, ExtractionConfig, PostCondition, collect_activations,
                         label_dataset, sample_weights)
from .monitor import CLASSIFIERS, RULES, monitor_classifiers, monitor_rules
from .network import LayerTap, forward, load_model
from .prover import (PROVED, COUNTEREXAMPLE, OutputProperty, outcome_report,
                     parse_constraints_file, prove_rule, region_coverage, support_mask)
from .rules import (RULESET_FILE, RuleSet, deserialize_ruleset, evaluate_rule, extract_rules,
                    select_max_support, serialize_ruleset, top_rules)
from .tensor_io import Dataset, file_sha256
from .tree import deserialize_tree, fit_tree, serialize_tree
from .verifier import Budget

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NO_RULES = 0, 2, 3, 4
EXIT_COUNTEREXAMPLE, EXIT_TIMEOUT = 10, 11
MANIFEST = "manifest.json"
DROPPED = ("-mp", "-onx", "-onx_map")


class ConfigError(Exception):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "y", "on"):
        return True
    if t in ("0", "false", "no", "n", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _flag(p, name, help):
    p.add_argument(name, type=_bool, nargs="?", const=True, default=False, help=help)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="layerrules", description="Infer, prove and monitor layer rules of ReLU networks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("-m", help="model JSON")
        sp.add_argument("-wd", required=True, help="working directory")
        sp.add_argument("-tx", help="inputs (.npy)")
        sp.add_argument("-ty", help="labels for -tx (.npy)")
        sp.add_argument("-vx", help="validation inputs (.npy)")
        sp.add_argument("-vy", help="labels for -vx (.npy)")
        for flag in DROPPED:
            sp.add_argument(flag, dest="dropped_" + flag.lstrip("-"), nargs="?", const="",
                            default=None, help=argparse.SUPPRESS)

    a = sub.add_parser("analyze", help="collect activations, learn trees, extract rules")
    common(a)
    a.add_argument("-layer_name", help="layer tap, e.g. dense_3 or dense_3:pre")
    _flag(a, "-odl", "tap the affine output of every layer named dense*")
    _flag(a, "-oal", "tap the activation of every layer named dense*")
    a.add_argument("-inptype", type=int, default=0, choices=(0, 1),
                   help="1: learn directly on the input features")
    a.add_argument("-type", type=int, default=0, choices=(0, 1, 2, 3), help="post-condition kind")
    _flag(a, "-acts", "learn on on/off neuron indicators")
    _flag(a, "-top", "keep only the highest-recall rule per label")
    _flag(a, "-sr", "skip rule extraction and validation")
    _flag(a, "-b", "balance classes")
    _flag(a, "-c", "weight samples by model confidence")
    a.add_argument("-rs", type=int, default=0, help="random state")
    a.add_argument("-max_depth", type=int, default=None)

    pr = sub.add_parser("prove", help="prove the max-support rule of a label")
    common(pr)
    pr.add_argument("-label", type=int, required=True)
    _flag(pr, "-pred", "property: the rule's label is the predicted class")
    _flag(pr, "-min_const", "with -pred: the label has the smallest output")
    pr.add_argument("-cp", help="constraints file with [node,MIN|MAX,slack] rows")
    pr.add_argument("-max_nodes", type=int, default=Budget.max_nodes)
    pr.add_argument("-timeout", type=float, default=Budget.seconds, help="seconds per query")
    pr.add_argument("-workers", type=int, default=1)

    mo = sub.add_parser("monitor", help="tag model outputs with per-layer votes")
    common(mo)
    mo.add_argument("mode", choices=(RULES, CLASSIFIERS))
    return p


# --- working directory ------------------------------------------------------

def _tree_file(tap: LayerTap) -> str:
    return str(tap).replace(":", "__") + ".json"


def _read_manifest(wd):
    path = os.path.join(wd, MANIFEST)
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def _write_manifest(wd, doc):
    files = {}
    for root, _, names in os.walk(wd):
        for name in sorted(names):
            full = os.path.join(root, name)
            rel = os.path.relpath(full, wd)
            if rel != MANIFEST:
                files[rel] = file_sha256(full)
    doc = dict(doc, version=__version__, files=dict(sorted(files.items())))
    with open(os.path.join(wd, MANIFEST), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _model(args, manifest):
    path = args.m or manifest.get("model", {}).get("path")
    if path is None:
        raise ConfigError("no model: pass -m or run analyze first")
    return load_model(path)


def _hash(path):
    return None if path is None else {"path": os.path.abspath(path), "sha256": file_sha256(path)}


# --- commands --------------------------------------------------------------

def cmd_analyze(args) -> int:
    if args.tx is None:
        raise ConfigError("analyze needs -tx")
    no_model = args.inptype == 1 and args.type == 3
    if args.m is None and not no_model:
        raise ConfigError("analyze needs -m")
    try:
        cfg = ExtractionConfig(args.layer_name, args.odl, args.oal, args.acts, args.inptype,
                               args.b, args.c, args.rs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    net = load_model(args.m) if args.m else None
    train = Dataset.load(args.tx, args.ty)
    post = PostCondition(args.type)
    L = label_dataset(net, train, post)
    logits = forward(net, train.inputs) if (args.c and net is not None and len(train)) else None
    weights = sample_weights(L, balance=args.b, logits=logits)
    mats = collect_activations(net, train, cfg)

    val = None
    if args.vx is not None and not args.sr:
        val = Dataset.load(args.vx, args.vy)
        val_L = label_dataset(net, val, post)
        val_mats = {m.layer: m for m in collect_activations(net, val, cfg)}

    os.makedirs(os.path.join(args.wd, "trees"), exist_ok=True)
    rules, layers = [], []
    for mat in mats:
        meta = {"layer": str(mat.layer), "acts": bool(cfg.acts), "type": args.type}
        tree = fit_tree(mat.rows, L, weights, seed=args.rs, max_depth=args.max_depth, metadata=meta)
        serialize_tree(tree, os.path.join(args.wd, "trees", _tree_file(mat.layer)))
        layers.append(str(mat.layer))
        if args.sr:
            continue
        for r in extract_rules(tree, mat.layer, cfg.acts):
            test = evaluate_rule(r, val_mats[mat.layer], val_L) if val is not None else None
            rules.append(r.with_metrics(evaluate_rule(r, mat, L), test))

    if not args.sr:
        rs = RuleSet(rules)
        if args.top:
            rs = top_rules(rs)
        serialize_ruleset(rs, args.wd)
        print(f"{len(rs)} rules over {len(layers)} layer(s) written to "
              f"{os.path.join(args.wd, RULESET_FILE)}")
    else:
        print(f"{len(layers)} tree(s) written to {os.path.join(args.wd, 'trees')}")
    _write_manifest(args.wd, {
        "command": "analyze",
        "model": _hash(args.m),
        "data": {k: _hash(getattr(args, k)) for k in ("tx", "ty", "vx", "vy")},
        "config": {"type": args.type, "acts": args.acts, "inptype": args.inptype,
                   "layer_name": args.layer_name, "odl": args.odl, "oal": args.oal,
                   "top": args.top, "sr": args.sr, "balance": args.b, "confidence": args.c,
                   "seed": args.rs, "max_depth": args.max_depth},
        "layers": layers,
    })
    return EXIT_OK


def cmd_prove(args) -> int:
    n_modes = int(args.pred) + int(args.cp is not None)
    if n_modes != 1:
        raise ConfigError("give exactly one of -pred or -cp")
    if args.min_const and not args.pred:
        raise ConfigError("-min_const refines -pred")
    if args.tx is None:
        raise ConfigError("prove needs -tx (inputs bounding the support set)")
    manifest = _read_manifest(args.wd)
    if not os.path.exists(os.path.join(args.wd, RULESET_FILE)):
        print(f"error: no {RULESET_FILE} in {args.wd}", file=sys.stderr)
        return EXIT_NO_RULES
    rs = deserialize_ruleset(args.wd)
    rule = select_max_support(rs, args.label)
    if rule.layer.layer_name == INPUT_LAYER:
        raise ConfigError("rules learned on raw inputs have no layer to prove against")
    net = _model(args, manifest)
    X = Dataset.load(args.tx).inputs

    if args.cp is not None:
        X_sup = X[support_mask(net, rule, X)]
        if len(X_sup) == 0:
            raise EmptySupport(f"rule for label {args.label} is satisfied by no -tx input")
        prop = parse_constraints_file(args.cp, forward(net, X_sup))
    elif args.min_const:
        prop = OutputProperty.argmin(args.label)
    else:
        prop = OutputProperty.argmax(args.label)

    budget = Budget(args.max_nodes, args.timeout)
    outcome = prove_rule(net, rule, prop, X, budget, workers=args.workers)
    coverage = None
    if args.vx is not None and outcome.region is not None:
        coverage = region_coverage(net, outcome.region, Dataset.load(args.vx).inputs)
    report = outcome_report(rule, prop, outcome, rule_id=rs.rules.index(rule), coverage=coverage)
    os.makedirs(os.path.join(args.wd, "proofs"), exist_ok=True)
    with open(os.path.join(args.wd, "proofs", f"{args.label}.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    for it in outcome.iterations:
        verdicts = ", ".join(f"{q.target}:{q.verdict}" for q in it.queries)
        print(f"iteration {it.iteration}: {verdicts}")
    print(f"outcome: {outcome.status}" +
          (f" at iteration {outcome.proved_at}" if outcome.proved_at is not None else ""))
    manifest.setdefault("proofs", {})[str(args.label)] = outcome.status
    _write_manifest(args.wd, manifest)
    if outcome.status == PROVED:
        return EXIT_OK
    return EXIT_COUNTEREXAMPLE if outcome.status == COUNTEREXAMPLE else EXIT_TIMEOUT


def cmd_monitor(args) -> int:
    if args.tx is None:
        raise ConfigError("monitor needs -tx")
    manifest = _read_manifest(args.wd)
    net = _model(args, manifest)
    D = Dataset.load(args.tx, args.ty)
    if len(D) == 0:
        D = Dataset(np.zeros((0, net.input_dim)), None if D.labels is None else D.labels)
    if args.mode == RULES:
        if not os.path.exists(os.path.join(args.wd, RULESET_FILE)):
            print(f"error: no {RULESET_FILE} in {args.wd}", file=sys.stderr)
            return EXIT_NO_RULES
        rs = deserialize_ruleset(args.wd)
        report = monitor_rules(net, [rs.for_layer(t) for t in rs.layers()], D)
    else:
        layers = manifest.get("layers")
        if not layers:
            print(f"error: no trees recorded in {args.wd}", file=sys.stderr)
            return EXIT_NO_RULES
        trees = [deserialize_tree(os.path.join(args.wd, "trees", _tree_file(LayerTap.parse(l))))
                 for l in layers]
        report = monitor_classifiers(net, trees, D)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "prove": cmd_prove, "monitor": cmd_monitor}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("choose a command: analyze, prove or monitor")
        for flag in DROPPED:
            if getattr(args, "dropped_" + flag.lstrip("-")) is not None:
                raise ConfigError(f"{flag} is not supported: proofs use the built-in verifier")
        return COMMANDS[args.command](args)
    except (ConfigError, MissingLabels, UnknownLayer) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoRulesForLabel as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_RULES
    except (LayerRulesError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
