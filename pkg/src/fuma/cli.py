"""Command-line pipeline driver.

Every subcommand that writes an artifact does so atomically (temp file plus
rename) and drops a ``<output>.manifest.json`` next to its primary output
recording tool versions, the seed, and every parameter, enough to re-run
the command bit-identically.  Stochastic commands require an explicit
--seed; nothing is ever seeded from the clock.

Exit codes: 0 success, 1 data error (unreadable/invalid inputs), 2 usage
error (bad flags).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from typing import Callable, IO

import numpy
import scipy

from . import __version__
from .classify import classify, suggest_interventions
from .clustering import (
    GAParams,
    ModelFormatError,
    label_clusters,
    load_model,
    save_model,
    select_k,
)
from .events import (
    DataFormatError,
    events_to_lines,
    load_catalog,
    load_outcomes,
    parse_event_log,
    write_catalog,
    write_outcomes,
)
from .evaluation import analyze_week_slice, count_active_by_week, nested_cv
from .features import (
    apply_normalizer,
    extract_feature_matrix,
    fit_normalizer,
    read_feature_matrix,
    write_feature_matrix,
)
from .rules import EmptyRuleSetError, MiningParams, format_rules, mine_rules
from .sessions import build_watch_records
from .simulate import (
    default_config,
    generate_cohort,
    load_cohort_config,
    load_truth,
    write_truth,
)


def _atomic_write(path: str, writer: Callable[[IO[str]], None]) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fuma-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(args: argparse.Namespace, primary_out: str) -> None:
    params = {
        k: v for k, v in vars(args).items() if k != "func" and not callable(v)
    }
    manifest = {
        "tool": "fuma",
        "version": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "command": args.command,
        "params": params,
    }
    _atomic_write(
        primary_out + ".manifest.json",
        lambda fh: fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n"),
    )


def _k_range(text: str) -> tuple[int, ...]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError(f"k range must look like 2..6, got {text!r}")
    try:
        a, b = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k range must be integers: {text!r}") from None
    if a < 2:
        raise argparse.ArgumentTypeError("k must be >= 2")
    if b < a:
        raise argparse.ArgumentTypeError(f"empty k range: {text!r}")
    return tuple(range(a, b + 1))


def _week_list(text: str) -> tuple[int, ...]:
    try:
        weeks = tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weeks must be integers: {text!r}") from None
    if not weeks or any(w < 1 for w in weeks):
        raise argparse.ArgumentTypeError("weeks must be >= 1")
    return weeks


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("FUMA_JOBS", "1")))
    except ValueError:
        return 1


def _open_out(args: argparse.Namespace, text: str) -> None:
    """Write ``text`` to args.out if given (with manifest), else stdout."""
    if getattr(args, "out", None):
        _atomic_write(args.out, lambda fh: fh.write(text))
        _write_manifest(args, args.out)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = load_cohort_config(fh)
        if args.n_students is not None:
            config.n_students = args.n_students
    else:
        config = default_config(
            n_students=args.n_students if args.n_students is not None else 400,
            seed=args.seed,
            separation=args.separation,
            weeks=args.weeks,
        )
    config.seed = args.seed
    cohort = generate_cohort(config)

    _atomic_write(args.out, lambda fh: fh.writelines(events_to_lines(cohort.events)))
    _atomic_write(
        args.outcomes,
        lambda fh: write_outcomes(fh, [cohort.outcomes[s] for s in sorted(cohort.outcomes)]),
    )
    if args.truth:
        _atomic_write(args.truth, lambda fh: write_truth(fh, cohort.truth))
    if args.out_catalog:
        _atomic_write(args.out_catalog, lambda fh: write_catalog(fh, config.catalog))
    _write_manifest(args, args.out)
    n_pass = sum(1 for o in cohort.outcomes.values() if o.passed)
    print(
        f"simulated {config.n_students} students, {len(cohort.events)} events, "
        f"pass rate {n_pass / config.n_students:.3f}"
    )
    return 0


def _cmd_ingest(args: argparse.Namespace) -> int:
    with open(args.catalog, encoding="utf-8") as fh:
        catalog = load_catalog(fh)
    with open(args.events, encoding="utf-8") as fh:
        events, report = parse_event_log(fh, strict=args.strict, catalog=catalog)
    print(f"accepted {report.accepted} events, rejected {report.rejected} lines")
    for reason in sorted(report.reasons):
        print(f"  {reason}: {report.reasons[reason]}")
    for line_no, message in report.first_errors:
        print(f"  line {line_no}: {message}")
    if args.out:
        _atomic_write(args.out, lambda fh: fh.writelines(events_to_lines(events)))
        _write_manifest(args, args.out)
    return 0


def _cmd_featurize(args: argparse.Namespace) -> int:
    with open(args.catalog, encoding="utf-8") as fh:
        catalog = load_catalog(fh)
    with open(args.events, encoding="utf-8") as fh:
        events, _ = parse_event_log(fh, strict=args.strict, catalog=catalog)
    records = build_watch_records(
        events, catalog, args.week_cutoff, course_start=args.course_start
    )
    student_ids = sorted({sid for sid, _ in records})
    if not student_ids:
        raise DataFormatError("no student has events before the cutoff")
    matrix = extract_feature_matrix(student_ids, records, catalog, args.week_cutoff)
    _atomic_write(args.out, lambda fh: write_feature_matrix(fh, student_ids, matrix))
    _write_manifest(args, args.out)
    if args.dump_sessions:
        def _dump(fh: IO[str]) -> None:
            for (sid, vid), rec in sorted(records.items()):
                fh.write(
                    f"{sid}\t{vid}\tsessions={len(rec.sessions)}\t"
                    f"coverage={rec.coverage:.4f}\trewatches={rec.rewatch_count}\t"
                    f"watched={int(rec.watched)}\tinterrupted={int(rec.interrupted)}\n"
                )
        _atomic_write(args.dump_sessions, _dump)
    print(f"wrote {len(student_ids)} students x 21 features to {args.out}")
    return 0


def _mining_from_args(args: argparse.Namespace) -> MiningParams:
    return MiningParams(
        min_support_frac=args.min_support,
        min_confidence_improvement=args.min_improvement,
        max_len=args.max_len,
        max_branching=args.branching,
    )


def _cmd_discover(args: argparse.Namespace) -> int:
    with open(args.features, encoding="utf-8") as fh:
        student_ids, matrix = read_feature_matrix(fh)
    with open(args.outcomes, encoding="utf-8") as fh:
        outcomes = load_outcomes(fh)
    missing = [s for s in student_ids if s not in outcomes]
    if missing:
        raise DataFormatError(f"{len(missing)} students lack outcomes (e.g. {missing[0]})")

    norm = fit_normalizer(matrix)
    normalized = apply_normalizer(matrix, norm)
    ga = GAParams(
        seed=args.seed,
        population_size=args.population,
        generations=args.generations,
    )
    selection = select_k(normalized, args.k_range, ga, jobs=args.jobs)
    clustering = selection.clusterings[selection.k]
    model = label_clusters(
        clustering,
        student_ids,
        outcomes,
        args.week_cutoff,
        normalization=norm,
        params={
            "seed": args.seed,
            "k_range": list(args.k_range),
            "votes": selection.votes,
            "population_size": args.population,
            "generations": args.generations,
            "min_support_frac": args.min_support,
            "min_confidence_improvement": args.min_improvement,
        },
    )
    mining = _mining_from_args(args)
    try:
        model.rulesets = [
            mine_rules(matrix, clustering.assignment, c, mining)
            for c in range(selection.k)
        ]
    except EmptyRuleSetError as exc:
        raise DataFormatError(
            f"{exc}; lower --min-support or --min-improvement"
        ) from None
    _atomic_write(args.out, lambda fh: save_model(fh, model))
    _write_manifest(args, args.out)

    sizes = ", ".join(
        f"{label}(n={size})" for label, size in zip(model.labels, model.cluster_sizes)
    )
    n_rules = "+".join(str(len(rs.rules)) for rs in model.rulesets)
    print(f"selected k={selection.k} (votes {selection.votes}); {sizes}; rules {n_rules}")
    return 0


def _cmd_rules(args: argparse.Namespace) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = load_model(fh)
    if not model.rulesets:
        raise DataFormatError("model contains no rulesets")
    blocks = [
        format_rules(ruleset, model.labels[ruleset.cluster])
        for ruleset in model.rulesets
    ]
    _open_out(args, "\n\n".join(blocks) + "\n")
    return 0


def _cmd_classify(args: argparse.Namespace) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = load_model(fh)
    with open(args.features, encoding="utf-8") as fh:
        student_ids, matrix = read_feature_matrix(fh)

    def _writer(fh: IO[str]) -> None:
        score_cols = ",".join(f"score_{label}" for label in model.labels)
        fh.write(f"student_id,assigned,{score_cols},ambiguous,matched_rule_ids\n")
        for sid, row in zip(student_ids, matrix):
            res = classify(row, model, sid, min_action_count=args.min_action_count)
            assigned = res.assigned_label if res.assigned_label else "Unclassified"
            scores = ",".join(repr(s.score) for s in res.scores)
            matched = "|".join(res.matched_rule_ids)
            fh.write(f"{sid},{assigned},{scores},{int(res.ambiguous)},{matched}\n")

    _atomic_write(args.out, _writer)
    _write_manifest(args, args.out)
    return 0


def _cmd_intervene(args: argparse.Namespace) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = load_model(fh)
    with open(args.features, encoding="utf-8") as fh:
        student_ids, matrix = read_feature_matrix(fh)
    lines = []
    for sid, row in zip(student_ids, matrix):
        res = classify(row, model, sid, min_action_count=args.min_action_count)
        for item in suggest_interventions(res, model, row):
            lines.append(json.dumps({
                "student_id": sid,
                "feature": item.feature,
                "direction": item.direction,
                "threshold": item.threshold,
                "rule_id": item.source_rule_id,
                "confidence": item.confidence,
                "message": item.render(),
            }, sort_keys=True) + "\n")
    _open_out(args, "".join(lines))
    return 0


def _render_stats_line(name: str, res) -> str:
    parts = [f"{name}: statistic={res.statistic:.4f}, p={res.p_value:.3g}"]
    if res.adjusted_p is not None:
        parts.append(f"Holm-adjusted p={res.adjusted_p:.3g}")
    if res.effect_size is not None:
        label = f" ({res.effect_label})" if res.effect_label else ""
        parts.append(f"{res.effect_name}={res.effect_size:.4f}{label}")
    return "  " + ", ".join(parts)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    with open(args.catalog, encoding="utf-8") as fh:
        catalog = load_catalog(fh)
    with open(args.outcomes, encoding="utf-8") as fh:
        outcomes = load_outcomes(fh)
    with open(args.events, encoding="utf-8") as fh:
        events, parse_report = parse_event_log(fh, catalog=catalog)
    truth = None
    if args.truth:
        with open(args.truth, encoding="utf-8") as fh:
            truth = load_truth(fh)

    active = count_active_by_week(events, args.course_start, catalog.n_weeks)
    analyses = [
        analyze_week_slice(
            events, catalog, outcomes, w,
            seed=args.seed, course_start=args.course_start,
            k_range=args.k_range, jobs=args.jobs,
        )
        for w in args.weeks
    ]

    cv_report = None
    if args.folds > 0:
        w_max = max(args.weeks)
        records = build_watch_records(
            events, catalog, w_max, course_start=args.course_start
        )
        ids = sorted({sid for sid, _ in records})
        matrix = extract_feature_matrix(ids, records, catalog, w_max)
        cv_report = nested_cv(
            matrix, ids, outcomes,
            folds=args.folds, seed=args.seed, week_cutoff=w_max, truth=truth,
        )

    lines = [
        "Behavior discovery and classification report",
        "=============================================",
        f"students with outcomes: {len(outcomes)}; events accepted: "
        f"{parse_report.accepted} (rejected {parse_report.rejected})",
        f"videos: {len(catalog)} across {catalog.n_weeks} weeks; seed: {args.seed}",
        "note: pass/dropout proportions compared by Pearson chi-square with",
        "Cramer's V effect size (in place of a multinomial logistic model).",
        "",
        "Active students per week:",
    ]
    lines += [f"  week {w}: {n}" for w, n in enumerate(active, start=1)]

    for analysis in analyses:
        model = analysis.model
        lines += ["", f"=== Week cutoff {analysis.week_cutoff} ===",
                  f"cohort: {len(analysis.student_ids)} students"]
        lines.append("  k    twcv        silhouette  calinski    c-index")
        for row in analysis.k_table:
            lines.append(
                f"  {row.k}    {row.twcv:<11.4f} {row.silhouette:<11.4f} "
                f"{row.calinski_harabasz:<11.4f} {row.c_index:.4f}"
            )
        lines.append(f"selected k = {analysis.k_star} (votes {model.params.get('votes')})")
        if model.tie_broken:
            lines.append("  note: outcome ranking tie broken by cluster index")
        for label, summary in zip(model.labels, model.outcome_summary):
            lines.append(
                f"  {label}: n={summary.n}, mean grade={summary.mean_grade:.4f}, "
                f"pass rate={summary.pass_rate:.4f}, dropout={summary.dropout_rate:.4f}"
            )
        lines.append(_render_stats_line("grade ANOVA", analysis.grade_anova))
        if analysis.pass_chi2 is not None:
            lines.append(_render_stats_line("pass chi-square", analysis.pass_chi2))
        if analysis.dropout_chi2 is not None:
            lines.append(_render_stats_line("dropout chi-square", analysis.dropout_chi2))
        if analysis.top_features:
            lines.append("top discriminative features (Cohen's d, + = higher in High):")
            for rank, eff in enumerate(analysis.top_features[:5], start=1):
                lines.append(
                    f"  {rank}. {eff.feature}: d={eff.cohens_d:+.3f}, "
                    f"dir={'+' if eff.direction > 0 else '-'}, "
                    f"Holm p={eff.adjusted_p:.3g}"
                )
        for ruleset in model.rulesets:
            lines.append("")
            lines.append(format_rules(ruleset, model.labels[ruleset.cluster]))

    if cv_report is not None:
        lines += ["", f"=== Nested CV at cutoff {max(args.weeks)} ===",
                  cv_report.summary()]

    _atomic_write(args.report, lambda fh: fh.write("\n".join(lines) + "\n"))

    _atomic_write(args.report + ".active.csv", lambda fh: fh.write(
        "week,active_count\n"
        + "".join(f"{w},{n}\n" for w, n in enumerate(active, start=1))
    ))

    def _weekstats(fh: IO[str]) -> None:
        fh.write(
            "week_cutoff,n_students,k,cluster,label,n,mean_grade,pass_rate,"
            "dropout_rate,anova_f,anova_p,anova_adj_p,eta_squared\n"
        )
        for analysis in analyses:
            a = analysis.grade_anova
            for c, (label, s) in enumerate(
                zip(analysis.model.labels, analysis.model.outcome_summary)
            ):
                fh.write(
                    f"{analysis.week_cutoff},{len(analysis.student_ids)},"
                    f"{analysis.k_star},{c},{label},{s.n},{s.mean_grade!r},"
                    f"{s.pass_rate!r},{s.dropout_rate!r},{a.statistic!r},"
                    f"{a.p_value!r},{a.adjusted_p!r},{a.effect_size!r}\n"
                )

    _atomic_write(args.report + ".weekstats.csv", _weekstats)

    def _features_csv(fh: IO[str]) -> None:
        fh.write("week_cutoff,rank,feature,cohens_d,direction,p,adj_p\n")
        for analysis in analyses:
            for rank, eff in enumerate(analysis.top_features, start=1):
                fh.write(
                    f"{analysis.week_cutoff},{rank},{eff.feature},{eff.cohens_d!r},"
                    f"{eff.direction},{eff.p_value!r},{eff.adjusted_p!r}\n"
                )

    _atomic_write(args.report + ".features.csv", _features_csv)

    def _cv_csv(fh: IO[str]) -> None:
        fh.write(
            "fold,k,min_support_frac,accuracy_proxy,accuracy_truth,kappa,"
            "n_test,n_unclassified\n"
        )
        if cv_report is None:
            return
        for f in cv_report.folds:
            truth_acc = "" if f.accuracy_truth is None else repr(f.accuracy_truth)
            fh.write(
                f"{f.fold},{f.chosen_params['k']},"
                f"{f.chosen_params['min_support_frac']!r},{f.accuracy_proxy!r},"
                f"{truth_acc},{f.kappa!r},{f.n_test},{f.n_unclassified}\n"
            )

    _atomic_write(args.report + ".cv.csv", _cv_csv)
    _write_manifest(args, args.report)
    print(f"wrote {args.report} and companion CSVs")
    return 0


_FIGURES = ("active-per-week", "pass-by-cluster", "dropout-by-cluster", "feature-effects")


def _cmd_plotdata(args: argparse.Namespace) -> int:
    if args.figure == "active-per-week":
        with open(args.report + ".active.csv", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
        return 0
    if args.figure in ("pass-by-cluster", "dropout-by-cluster"):
        col = "pass_rate" if args.figure == "pass-by-cluster" else "dropout_rate"
        with open(args.report + ".weekstats.csv", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            idx = {name: i for i, name in enumerate(header)}
            sys.stdout.write(f"week_cutoff,label,{col}\n")
            for line in fh:
                parts = line.strip().split(",")
                sys.stdout.write(
                    f"{parts[idx['week_cutoff']]},{parts[idx['label']]},"
                    f"{parts[idx[col]]}\n"
                )
        return 0
    with open(args.report + ".features.csv", encoding="utf-8") as fh:
        header = fh.readline()
        rows = fh.readlines()
    sys.stdout.write(header)
    for line in rows:
        week = line.split(",", 1)[0]
        if args.week_cutoff is None or week == str(args.week_cutoff):
            sys.stdout.write(line)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fuma",
        description="Two-phase user modeling for MOOC video interaction logs.",
    )
    parser.add_argument("--version", action="version", version=f"fuma {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--config", help="cohort config JSON (default: built-in)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="event log TSV")
    p.add_argument("--outcomes", required=True, help="outcomes CSV")
    p.add_argument("--truth", help="planted archetype CSV")
    p.add_argument("--out-catalog", help="write the generated catalog CSV")
    p.add_argument("--n-students", type=int)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--weeks", type=int, default=6)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("ingest", help="parse and validate an event log")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--strict", action="store_true", help="abort on first bad line")
    p.add_argument("--out", help="write the accepted events back out")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("featurize", help="extract the 21 behavior features")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--week-cutoff", type=int, required=True)
    p.add_argument("--out", required=True, help="features CSV")
    p.add_argument("--course-start", type=float, default=0.0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--dump-sessions", help="write per-video watch summaries")
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("discover", help="cluster students and mine rules")
    p.add_argument("--features", required=True)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--k-range", type=_k_range, default=(2, 3, 4, 5, 6),
                   metavar="A..B")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--week-cutoff", type=int, required=True,
                   help="week the features were extracted at")
    p.add_argument("--min-support", type=float, default=0.1)
    p.add_argument("--min-improvement", type=float, default=0.01)
    p.add_argument("--max-len", type=int, default=3)
    p.add_argument("--branching", type=int, default=3)
    p.add_argument("--population", type=int, default=30)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(func=_cmd_discover)

    p = sub.add_parser("rules", help="print a model's association rules")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=_cmd_rules)

    p = sub.add_parser("classify", help="score students against a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="results CSV")
    p.add_argument("--min-action-count", type=float, default=0.0)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("intervene", help="suggest nudges for Low-cluster students")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", help="write JSONL to a file instead of stdout")
    p.add_argument("--min-action-count", type=float, default=0.0)
    p.set_defaults(func=_cmd_intervene)

    p = sub.add_parser("evaluate", help="week-sliced analysis plus nested CV")
    p.add_argument("--events", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--outcomes", required=True)
    p.add_argument("--weeks", type=_week_list, required=True, metavar="2,3,4")
    p.add_argument("--folds", type=int, default=10,
                   help="outer CV folds at the last cutoff; 0 skips CV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--truth", help="planted archetype CSV for accuracy scoring")
    p.add_argument("--k-range", type=_k_range, default=(2, 3, 4, 5, 6),
                   metavar="A..B")
    p.add_argument("--course-start", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=_default_jobs())
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("plotdata", help="emit plot-ready series from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--figure", required=True, choices=_FIGURES)
    p.add_argument("--week-cutoff", type=int)
    p.set_defaults(func=_cmd_plotdata)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, ModelFormatError) as exc:
        print(f"fuma {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"fuma {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
