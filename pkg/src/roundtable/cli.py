"""Command-line front end: validate, generate, run, report.

Exit codes: 0 success, 1 input error, 2 usage, 3 partial failure.
``run`` executes a strategies-by-tasks matrix from a JSON experiment
config, writing one transcript per run plus an aggregate report; a failed
matrix leaves whatever completed under ``<out>/incomplete/``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .agents import ScriptedAgentConfig, ScriptedInstructorConfig, TokenScheme
from .baselines import baseline_agent_all, baseline_mv
from .engine import run_discussion
from .errors import (
    BackendError,
    ParamError,
    ProtocolError,
    RoundtableError,
    SchemaError,
)
from .harness import baseline_scripted_backend, scripted_setup
from .llm import HttpBackend, LlmBackendConfig
from .metrics import (
    BASELINE_AGENT_ALL,
    BASELINE_MV,
    RunRecord,
    TarParams,
    aggregate,
    emit_report,
    run_record_from_transcript,
)
from .strategy import (
    StrategyConfig,
    enumerate_valid_strategies,
    parse_strategy,
    validate_strategy,
)
from .tasks import (
    SCENARIO_DEI,
    SCENARIO_SES,
    GeneratorParams,
    generate_tasks,
    load_tasks,
    save_tasks,
)
from .transcript import Transcript

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3

SES_MV_NOTE = (
    "majority voting over mostly irrelevant evidence is not a comparable "
    "baseline for evidence-synthesis tasks"
)


def _cmd_validate(args) -> int:
    all_valid = True
    for text in args.strategies:
        try:
            combo = parse_strategy(text)
        except RoundtableError as exc:
            print(f"{text}: parse error: {exc}")
            all_valid = False
            continue
        violations = validate_strategy(combo)
        if violations:
            print(f"{text}: invalid ({', '.join(violations)})")
            all_valid = False
        else:
            print(f"{text}: valid")
    return EXIT_OK if all_valid else EXIT_INPUT


def _cmd_generate(args) -> int:
    try:
        params = GeneratorParams(
            scenario=args.scenario,
            n_tasks=args.n_tasks,
            n_segments=args.n_segments,
            n_consistent=args.n_consistent,
            informative_segment=args.informative_segment,
            noise=args.noise,
            seed=args.seed,
        )
        tasks = generate_tasks(params)
    except ParamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    save_tasks(tasks, args.out)
    print(f"wrote {len(tasks)} {args.scenario} tasks to {args.out}")
    return EXIT_OK


def _run_seed(base_seed: int, strategy_label: str, task_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{strategy_label}:{task_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _scripted_profiles(backend_doc: dict):
    agent_doc = backend_doc.get("agent", {})
    agent_profile = None
    if agent_doc:
        agent_profile = ScriptedAgentConfig(
            initial_label=agent_doc.get("initial_label", ""),
            stubbornness=agent_doc.get("stubbornness", 1),
            persuasion=agent_doc.get("persuasion", "adopt_first_informed"),
            summarizer=agent_doc.get("summarizer", "truncate:400"),
            intent_rule=agent_doc.get("intent_rule", "always"),
            addressee_rule=agent_doc.get("addressee_rule", "peers_disagreeing"),
            padding_words=agent_doc.get("padding_words", 0),
        )
    instructor_doc = backend_doc.get("instructor", {})
    instructor_profile = None
    if instructor_doc:
        instructor_profile = ScriptedInstructorConfig(
            ruling_rule=instructor_doc.get("ruling_rule", "informed_then_unanimity"),
            summarizer=instructor_doc.get("summarizer", "truncate:240"),
        )
    return agent_profile, instructor_profile


class ExperimentConfig:
    """Parsed and validated experiment definition."""

    def __init__(self, doc: dict, config_dir: Path):
        if not isinstance(doc, dict):
            raise SchemaError("experiment config must be an object", "")
        if "seed" not in doc:
            raise SchemaError("missing key 'seed'", "")
        self.seed = int(doc["seed"])
        self.max_rounds = int(doc.get("max_rounds", 10))
        strategies = doc.get("strategies", "all")
        if strategies == "all" or strategies == ["all"]:
            self.strategies = enumerate_valid_strategies()
        elif isinstance(strategies, list):
            for label in strategies:
                violations = validate_strategy(parse_strategy(label))
                if violations:
                    raise SchemaError(
                        f"strategy '{label}' is invalid: {', '.join(violations)}",
                        "/strategies",
                    )
            self.strategies = list(strategies)
        else:
            raise SchemaError("strategies must be 'all' or a list", "/strategies")
        self.baselines = list(doc.get("baselines", []))
        for baseline in self.baselines:
            if baseline not in (BASELINE_AGENT_ALL, BASELINE_MV):
                raise SchemaError(f"unknown baseline '{baseline}'", "/baselines")
        if "task_file" in doc:
            task_path = Path(doc["task_file"])
            if not task_path.is_absolute():
                task_path = config_dir / task_path
            if not task_path.exists():
                raise SchemaError(f"task file '{task_path}' does not exist", "/task_file")
            self.tasks = load_tasks(task_path)
        elif "generator" in doc:
            gen = doc["generator"]
            self.tasks = generate_tasks(
                GeneratorParams(
                    scenario=gen.get("scenario", SCENARIO_SES),
                    n_tasks=gen.get("n_tasks", 10),
                    n_segments=gen.get("n_segments", 6),
                    n_consistent=gen.get("n_consistent", 1),
                    informative_segment=gen.get("informative_segment", "BHC"),
                    noise=gen.get("noise", 0.0),
                    seed=gen.get("seed", self.seed),
                )
            )
        else:
            raise SchemaError("config needs 'task_file' or 'generator'", "")
        if not self.tasks:
            raise SchemaError("no tasks to run", "/generator")
        backend_doc = doc.get("backend", {"kind": "scripted"})
        self.backend_kind = backend_doc.get("kind", "scripted")
        self.agent_profile = None
        self.instructor_profile = None
        self.llm_config = None
        if self.backend_kind == "scripted":
            self.agent_profile, self.instructor_profile = _scripted_profiles(backend_doc)
        elif self.backend_kind == "llm":
            try:
                self.llm_config = LlmBackendConfig(
                    endpoint_url=backend_doc["endpoint_url"],
                    model_name=backend_doc["model_name"],
                    temperature=backend_doc.get("temperature", 0.0),
                    max_output_tokens=backend_doc.get("max_output_tokens", 512),
                    retry_count=backend_doc.get("retry_count", 2),
                    backoff=tuple(backend_doc.get("backoff", (0.5, 1.0))),
                    api_key_env=backend_doc.get("api_key_env", "OPENAI_API_KEY"),
                    template_dir=backend_doc.get("template_dir"),
                    max_in_flight=backend_doc.get("max_in_flight", 4),
                )
            except KeyError as exc:
                raise SchemaError(f"llm backend config missing {exc}", "/backend")
        else:
            raise SchemaError(f"unknown backend kind '{self.backend_kind}'", "/backend/kind")
        scheme_value = doc.get("token_scheme", TokenScheme.WHITESPACE.value)
        try:
            self.token_scheme = TokenScheme(scheme_value)
        except ValueError:
            raise SchemaError(f"unknown token scheme '{scheme_value}'", "/token_scheme")
        tar = doc.get("tar", {})
        self.tar_params = TarParams(alpha=tar.get("alpha", 1.0), beta=tar.get("beta", 4.0))
        self.out_dir = Path(doc.get("out_dir", "out"))
        if not self.out_dir.is_absolute():
            self.out_dir = config_dir / self.out_dir
        self.jobs = int(doc.get("jobs", 1))
        self.format = doc.get("format", "csv")
        if self.format not in ("csv", "json"):
            raise SchemaError(f"unknown report format '{self.format}'", "/format")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}", "")
        return cls(doc, path.parent.resolve())


def _execute_one(config: ExperimentConfig, strategy_label: str, task) -> tuple[RunRecord, Transcript]:
    seed = _run_seed(config.seed, strategy_label, task.id)
    if strategy_label in (BASELINE_AGENT_ALL, BASELINE_MV):
        backend = (
            baseline_scripted_backend(
                task, agent_profile=config.agent_profile, token_scheme=config.token_scheme
            )
            if config.backend_kind == "scripted"
            else HttpBackend(config.llm_config)
        )
        run = baseline_agent_all if strategy_label == BASELINE_AGENT_ALL else baseline_mv
        record, transcript = run(task, backend, seed=seed)
        return record, transcript
    strategy = StrategyConfig.from_label(strategy_label, max_rounds=config.max_rounds, seed=seed)
    roster, backends = scripted_setup(
        task,
        strategy,
        agent_profile=config.agent_profile,
        instructor_profile=config.instructor_profile,
        token_scheme=config.token_scheme,
    )
    if config.backend_kind == "llm":
        backends = {name: HttpBackend(config.llm_config) for name in backends}
    transcript, _ = run_discussion(task, strategy, roster, backends)
    return run_record_from_transcript(transcript), transcript


def _cmd_run(args) -> int:
    try:
        config = ExperimentConfig.load(args.config)
    except FileNotFoundError:
        print(f"error: config file '{args.config}' not found", file=sys.stderr)
        return EXIT_INPUT
    except (SchemaError, RoundtableError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.out:
        config.out_dir = Path(args.out)
    if args.jobs:
        config.jobs = args.jobs
    if args.seed is not None:
        config.seed = args.seed
    if args.alpha or args.beta:
        config.tar_params = TarParams(
            alpha=args.alpha or config.tar_params.alpha,
            beta=args.beta or config.tar_params.beta,
        )
    if args.format:
        config.format = args.format

    out_dir = config.out_dir
    staging = out_dir / "incomplete"
    staging.mkdir(parents=True, exist_ok=True)
    jobs = [(label, task) for label in config.strategies + config.baselines for task in config.tasks]
    results: dict[tuple[str, str], tuple[RunRecord, Transcript]] = {}

    def execute(job):
        label, task = job
        return job, _execute_one(config, label, task)

    try:
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                for (label, task), result in pool.map(execute, jobs):
                    results[(label, task.id)] = result
        else:
            for job in jobs:
                (label, task), result = execute(job)
                results[(label, task.id)] = result
    except (BackendError, ProtocolError, RoundtableError) as exc:
        for (label, task_id), (_, transcript) in sorted(results.items()):
            (staging / f"{label}__{task_id}.json").write_text(
                transcript.dumps(), encoding="utf-8"
            )
        partial = getattr(exc, "partial_transcript", None)
        if partial is not None:
            (staging / f"{partial.strategy_label}__{partial.task_id}.partial.json").write_text(
                partial.dumps(), encoding="utf-8"
            )
        print(f"error: run aborted: {exc}", file=sys.stderr)
        print(f"partial outputs kept under {staging}", file=sys.stderr)
        return EXIT_PARTIAL

    for (label, task_id), (_, transcript) in sorted(results.items()):
        (staging / f"{label}__{task_id}.json").write_text(transcript.dumps(), encoding="utf-8")
    transcripts_dir = out_dir / "transcripts"
    if transcripts_dir.exists():
        shutil.rmtree(transcripts_dir)
    staging.rename(transcripts_dir)

    records = [record for record, _ in results.values()]
    report = _build_report(records, config.tar_params, config.format)
    report_path = out_dir / f"report.{config.format}"
    report_path.write_text(report, encoding="utf-8")
    print(f"wrote {len(records)} transcripts and {report_path}")
    return EXIT_OK


def _build_report(records: list[RunRecord], tar_params: TarParams, format: str) -> str:
    aggregates = aggregate(records, tar_params)
    notes = {
        BASELINE_MV: SES_MV_NOTE
        for a in aggregates
        if a.strategy == BASELINE_MV and a.scenario == SCENARIO_SES
    }
    return emit_report(aggregates, tar_params, format=format, notes=notes)


def _cmd_report(args) -> int:
    directory = Path(args.transcripts)
    if not directory.is_dir():
        print(f"error: '{directory}' is not a directory", file=sys.stderr)
        return EXIT_INPUT
    tar_params = TarParams(alpha=args.alpha or 1.0, beta=args.beta or 4.0)
    records = []
    corrupt = []
    for path in sorted(directory.glob("*.json")):
        try:
            transcript = Transcript.loads(path.read_text(encoding="utf-8"))
            record = run_record_from_transcript(transcript)
            _check_conservation(transcript, record)
        except (RoundtableError, ValueError) as exc:
            corrupt.append((path.name, str(exc)))
            continue
        records.append(record)
    for name, reason in corrupt:
        print(f"skipping corrupt transcript {name}: {reason}", file=sys.stderr)
    if not records:
        report = emit_report([], tar_params, format=args.format or "csv")
        print("warning: no usable transcripts found", file=sys.stderr)
    else:
        report = _build_report(records, tar_params, args.format or "csv")
    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    else:
        sys.stdout.write(report)
    return EXIT_PARTIAL if corrupt else EXIT_OK


def _check_conservation(transcript: Transcript, record: RunRecord) -> None:
    """Recount deterministic-scheme outputs; mismatch marks the file corrupt."""
    if transcript.token_scheme == TokenScheme.PROVIDER_REPORTED.value:
        return
    from .agents import count_tokens

    scheme = TokenScheme(transcript.token_scheme)
    for message in transcript.all_messages():
        expected = count_tokens(message.content, scheme)
        if message.output_tokens != expected:
            raise ValueError(
                f"output token count {message.output_tokens} != recount {expected} "
                f"for round {message.round_index} speaker {message.speaker_id}"
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roundtable",
        description="Round-based multi-agent discussion experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check strategy strings")
    p_validate.add_argument("strategies", nargs="+", metavar="STRATEGY")

    p_generate = sub.add_parser("generate", help="write a synthetic task file")
    p_generate.add_argument("--scenario", choices=[SCENARIO_SES, SCENARIO_DEI], required=True)
    p_generate.add_argument("--n-tasks", type=int, default=20)
    p_generate.add_argument("--n-segments", type=int, default=6)
    p_generate.add_argument("--n-consistent", type=int, default=1)
    p_generate.add_argument("--informative-segment", default="BHC")
    p_generate.add_argument("--noise", type=float, default=0.0)
    p_generate.add_argument("--seed", type=int, default=0)
    p_generate.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="run a strategies-by-tasks experiment matrix")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="override the config's output directory")
    p_run.add_argument("--jobs", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--alpha", type=float)
    p_run.add_argument("--beta", type=float)
    p_run.add_argument("--format", choices=["csv", "json"])

    p_report = sub.add_parser("report", help="rebuild the report from transcripts")
    p_report.add_argument("--transcripts", required=True)
    p_report.add_argument("--out")
    p_report.add_argument("--alpha", type=float)
    p_report.add_argument("--beta", type=float)
    p_report.add_argument("--format", choices=["csv", "json"])

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "generate":
        return _cmd_generate(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "report":
        return _cmd_report(args)
    parser.print_usage(sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
