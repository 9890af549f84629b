"""Command-line interface for the final-layer extraction toolkit."""

import asyncio
from pathlib import Path
from typing import Any, Optional

import typer
import yaml
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src import __version__
from src.agents.attack_suite import AttackSuiteAgent
from src.agents.attacks import logit_recoverer, run_attack
from src.agents.defense_sweep import DefenseSweepAgent
from src.agents.lower_bound import DEFAULT_MAX_ROUNDS, LowerBoundAgent
from src.agents.suites import DEFAULT_EXPERIMENTS_PATH, experiment_from_dict, load_experiment
from src.analysis.lower_bound import DEFAULT_BIT_TARGETS, lower_bound_table
from src.analysis.metrics import aligned_rms, orthogonality_error
from src.clients.completions import RemoteSession
from src.extract import (
    collect_query_matrix,
    detect_norm_layer,
    extract_hidden_dim,
    extract_layer,
    extract_layer_orthogonal,
    orthogonal_residual,
    required_queries,
    steal_hidden_dim,
    write_spectrum_csv,
)
from src.models.experiment import (
    AttackName,
    AttackSettings,
    DefenseKind,
    ExperimentConfig,
    Report,
    TransportKind,
)
from src.models.oracle import ApiConfig, ApiMode
from src.models.victim import VictimSpec
from src.oracle.base import QuerySession
from src.oracle.errors import StealerError
from src.oracle.local import LocalSession
from src.oracle.transcript import TranscriptRecorder
from src.utils.formatting import format_bits, format_cost, format_number, format_scientific
from src.victim.builder import build_victim
from src.victim.config import DEFAULT_VICTIMS_PATH, dump_victim_spec, load_victim_spec
from src.victim.model import Victim
from src.victim.truth_io import write_matrix

app = typer.Typer(
    name="stealer",
    help="Final-layer extraction attacks against simulated language-model APIs",
    add_completion=False,
)
victim_app = typer.Typer(help="Build victims and export their ground truth", add_completion=False)
extract_app = typer.Typer(help="Steal the hidden dimension or the final layer", add_completion=False)
report_app = typer.Typer(help="Standalone reports", add_completion=False)
app.add_typer(victim_app, name="victim")
app.add_typer(extract_app, name="extract")
app.add_typer(report_app, name="report")
console = Console()

VICTIM_HELP = "Victim preset, or 'path.yaml#preset' for another victims file"


def _fail(message: str) -> None:
    console.print(f"[red]Error: {message}[/red]")
    raise typer.Exit(1)


def _load_spec(victim: str) -> VictimSpec:
    """Resolve 'preset', 'file.yaml' or 'file.yaml#preset'."""
    path, _, preset = victim.partition("#")
    if path.endswith((".yaml", ".yml")):
        return load_victim_spec(path, preset or None)
    return load_victim_spec(DEFAULT_VICTIMS_PATH, victim)


def _parse_params(pairs: Optional[list[str]]) -> dict[str, Any]:
    params: dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got '{pair}'")
        params[key.strip()] = yaml.safe_load(value)
    return params


def _api_config(
    base: ApiConfig,
    mode: Optional[str] = None,
    k: Optional[int] = None,
    bias_bound: Optional[float] = None,
    bias_max_entries: Optional[int] = None,
    overhead: Optional[int] = None,
) -> ApiConfig:
    updates = {
        "mode": ApiMode(mode) if mode else None,
        "k": k,
        "bias_bound": bias_bound,
        "bias_max_entries": bias_max_entries,
        "overhead_tokens": overhead,
    }
    data = {**base.model_dump(), **{key: v for key, v in updates.items() if v is not None}}
    return ApiConfig.model_validate(data)


def _spinner(description: str, coroutine: Any) -> Any:
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    ) as progress:
        task = progress.add_task(description, total=None)
        result = asyncio.run(coroutine)
        progress.update(task, completed=True)
    return result


def _display_report(report: Report, title: str) -> None:
    table = Table(title=title)
    table.add_column("Victim", style="bold")
    table.add_column("Attack", style="cyan")
    table.add_column("Setting")
    table.add_column("Seed", justify="right")
    table.add_column("Dim", justify="right")
    table.add_column("RMS", justify="right")
    table.add_column("Bits", justify="right")
    table.add_column("Queries/logit", justify="right")
    table.add_column("Tokens/logit", justify="right")
    table.add_column("Queries", justify="right")
    table.add_column("Status")

    for run in report.runs:
        status = "[green]ok[/green]" if run.succeeded else f"[red]{run.error}[/red]"
        if run.succeeded and run.detail and not run.detail.startswith("n="):
            status = f"[green]{run.detail}[/green]"
        table.add_row(
            run.victim,
            run.attack,
            run.setting or "-",
            str(run.seed),
            str(run.extracted_dim) if run.extracted_dim is not None else "-",
            format_scientific(run.rms),
            format_bits(run.bits),
            format_cost(run.queries_per_logit),
            format_cost(run.tokens_per_logit),
            format_number(run.queries),
            status,
        )
    console.print(table)
    console.print(f"[dim]revision {report.revision}[/dim]")


def _write_report(report: Report, output: Optional[Path]) -> None:
    if output is None:
        return
    json_path, csv_path = report.write(output)
    console.print(f"[dim]Wrote {json_path} and {csv_path}[/dim]")


# ============================================================================
# victim
# ============================================================================


@victim_app.command("build")
def victim_build(
    victim: str = typer.Option("logit_recovery", "--victim", "-v", help=VICTIM_HELP),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the resolved spec as YAML"),
):
    """Build a victim and show its shape."""
    try:
        spec = _load_spec(victim)
        model = build_victim(spec)
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    table = Table(title=f"Victim {spec.name}", show_header=False)
    table.add_column("Field", style="cyan")
    table.add_column("Value")
    table.add_row("vocab size (l)", str(model.vocab_size))
    table.add_row("hidden dim (h)", str(model.hidden_dim))
    table.add_row("effective rank", str(spec.effective_rank))
    table.add_row("served width", str(model.projection.shape[1]))
    table.add_row("normalization", spec.norm_kind.value)
    table.add_row("precision", spec.precision.value)
    table.add_row("seed", str(spec.seed))
    table.add_row("defenses", "yes" if spec.has_defenses else "none")
    console.print(table)

    if out is not None:
        console.print(f"[dim]Wrote {dump_victim_spec(spec, out)}[/dim]")


@victim_app.command("export-truth")
def victim_export_truth(
    victim: str = typer.Option("logit_recovery", "--victim", "-v", help=VICTIM_HELP),
    out: Path = typer.Option(Path("truth"), "--out", "-o", help="Output directory"),
):
    """Write W (and the served projection when it differs) as binary matrices."""
    try:
        spec = _load_spec(victim)
        model = build_victim(spec)
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    written = [write_matrix(out / "weights.bin", model.weights)]
    if model.projection is not model.weights:
        written.append(write_matrix(out / "projection.bin", model.projection))
    written.append(dump_victim_spec(spec, out / "victim.yaml"))
    for path in written:
        console.print(f"[green]Wrote {path}[/green]")


# ============================================================================
# serve
# ============================================================================


@app.command()
def serve(
    bind: str = typer.Option("127.0.0.1:8000", "--bind", envvar="STEALER_BIND"),
    mode: str = typer.Option("topk_logprobs", "--mode", envvar="STEALER_MODE"),
    k: int = typer.Option(5, "--k", help="Logprobs per response"),
    bias_bound: float = typer.Option(100.0, "--bias-bound", help="Logit bias bound B"),
    bias_max_entries: int = typer.Option(300, "--bias-max-entries", help="Biased tokens cap N"),
    overhead: int = typer.Option(0, "--overhead", help="Billed overhead tokens per query"),
    victim_config: str = typer.Option(
        "logit_recovery", "--victim-config", envvar="STEALER_VICTIM_CONFIG", help=VICTIM_HELP
    ),
):
    """Serve a victim behind the completions API until interrupted."""
    from api.server import ServerHandle

    try:
        spec = _load_spec(victim_config)
        config = ApiConfig(
            mode=ApiMode(mode),
            k=k,
            bias_bound=bias_bound,
            bias_max_entries=bias_max_entries,
            overhead_tokens=overhead,
        )
        handle = ServerHandle(build_victim(spec), config, bind).bind()
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    console.print(Panel.fit(
        f"[bold blue]Serving {spec.name}[/bold blue]\n"
        f"{handle.endpoint}  mode={config.mode.value}  k={k}  B={bias_bound}  N={bias_max_entries}",
        border_style="blue",
    ))
    handle.serve_forever()


# ============================================================================
# attack
# ============================================================================


async def _attack(
    settings: AttackSettings,
    model: Victim,
    seed: int,
    endpoint: Optional[str],
    transcript: Optional[Path],
) -> Any:
    session: QuerySession
    remote: Optional[RemoteSession] = None
    if endpoint:
        remote = await RemoteSession.connect(endpoint)
        session = remote
    else:
        session = LocalSession(model, settings.effective_api())
    recorder = TranscriptRecorder(session) if transcript else None
    try:
        return await run_attack(settings, recorder or session, model, seed)
    finally:
        if recorder is not None and transcript is not None:
            recorder.write_jsonl(transcript)
        if remote is not None:
            await remote.close()


@app.command()
def attack(
    name: str = typer.Argument(..., help="Attack name, e.g. reference_token or one_of_n"),
    victim: str = typer.Option("logit_recovery", "--victim", "-v", help=VICTIM_HELP),
    mode: Optional[str] = typer.Option(None, "--mode", help="API mode (default: the attack's)"),
    k: Optional[int] = typer.Option(None, "--k"),
    bias_bound: Optional[float] = typer.Option(None, "--bias-bound"),
    bias_max_entries: Optional[int] = typer.Option(None, "--bias-max-entries"),
    overhead: Optional[int] = typer.Option(None, "--overhead"),
    prompts: int = typer.Option(1, "--prompts", "-p", help="Prompts to attack"),
    seed: int = typer.Option(0, "--seed", "-s"),
    param: Optional[list[str]] = typer.Option(None, "--param", help="Attack parameter key=value"),
    endpoint: Optional[str] = typer.Option(None, "--endpoint", help="Attack a running server"),
    transcript: Optional[Path] = typer.Option(None, "--transcript", help="Write transcript.jsonl"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write report files here"),
):
    """Run one attack and score it against the victim's ground truth."""
    try:
        attack_name = AttackName(name)
        spec = _load_spec(victim)
        settings = AttackSettings(name=attack_name, params=_parse_params(param), prompts=prompts)
        api = _api_config(settings.effective_api(), mode, k, bias_bound, bias_max_entries, overhead)
        settings = settings.model_copy(update={"api": api})
        settings.check_compatibility()
        model = build_victim(spec)
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    metrics = _spinner(
        f"Running {attack_name.value}...", _attack(settings, model, seed, endpoint, transcript)
    )
    experiment = ExperimentConfig(name=f"attack-{attack_name.value}", victims=[spec], attacks=[settings])
    report = Report.for_config(experiment, [metrics])
    _display_report(report, f"{attack_name.value} on {spec.name}")
    if transcript is not None:
        console.print(f"[dim]Wrote {transcript}[/dim]")
    _write_report(report, output)
    if not metrics.succeeded:
        _fail(f"{metrics.error}: {metrics.detail}")


# ============================================================================
# extract
# ============================================================================


def _extract_session(
    victim: str, via: Optional[str], mode: Optional[str], k: Optional[int]
) -> tuple[Victim, QuerySession, Any]:
    spec = _load_spec(victim)
    model = build_victim(spec)
    recoverer = None
    base = ApiConfig(mode=ApiMode.ALL_LOGITS)
    if via:
        settings = AttackSettings(name=AttackName(via))
        base = settings.effective_api()
        recoverer = logit_recoverer(settings.name)
    config = _api_config(base, mode, k)
    return model, LocalSession(model, config), recoverer


@extract_app.command("dim")
def extract_dim(
    victim: str = typer.Option("layer_steal", "--victim", "-v", help=VICTIM_HELP),
    n: Optional[int] = typer.Option(None, "--n", help="Fixed query count (default: doubling)"),
    expected: int = typer.Option(16, "--expected", help="Initial dimension guess"),
    seed: int = typer.Option(0, "--seed", "-s"),
    via: Optional[str] = typer.Option(None, "--via", help="Recover rows with this logit attack"),
    mode: Optional[str] = typer.Option(None, "--mode"),
    k: Optional[int] = typer.Option(None, "--k"),
    spectrum_csv: Optional[Path] = typer.Option(None, "--spectrum-csv", help="Write spectrum.csv"),
):
    """Extract the hidden dimension from the spectrum of stacked logit vectors."""
    try:
        model, session, recoverer = _extract_session(victim, via, mode, k)

        async def steal() -> Any:
            if n is not None:
                matrix = await collect_query_matrix(session, n, seed=seed, recoverer=recoverer)
                dim, report = extract_hidden_dim(matrix)
                return dim, report, matrix
            return await steal_hidden_dim(session, expected, seed=seed, recoverer=recoverer)

        dim, report, matrix = _spinner("Collecting logit vectors...", steal())
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    gap = report.log_gaps[dim - 1] if dim - 1 < len(report.log_gaps) else float("nan")
    console.print(Panel.fit(
        f"[bold]Extracted hidden dimension: [cyan]{dim}[/cyan][/bold]\n"
        f"true h = {model.hidden_dim}, served width = {model.projection.shape[1]}\n"
        f"{matrix.n} queries, {matrix.width} columns, log-gap {gap:.2f}",
        border_style="green" if dim == model.hidden_dim else "yellow",
    ))
    if spectrum_csv is not None:
        console.print(f"[dim]Wrote {write_spectrum_csv(report, spectrum_csv)}[/dim]")


@extract_app.command("layer")
def extract_layer_cmd(
    victim: str = typer.Option("layer_steal", "--victim", "-v", help=VICTIM_HELP),
    n: Optional[int] = typer.Option(None, "--n", help="Query count (default: 2l)"),
    seed: int = typer.Option(0, "--seed", "-s"),
    via: Optional[str] = typer.Option(None, "--via", help="Recover rows with this logit attack"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the stolen matrix"),
):
    """Steal the final layer up to an affine transformation."""
    try:
        model, session, recoverer = _extract_session(victim, via, None, None)
        queries = n or 2 * model.vocab_size

        async def steal() -> Any:
            matrix = await collect_query_matrix(session, queries, seed=seed, recoverer=recoverer)
            dim, _ = extract_hidden_dim(matrix)
            return matrix, extract_layer(matrix, dim)

        matrix, stolen = _spinner("Collecting logit vectors...", steal())
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    truth = model.weights[matrix.columns]
    if matrix.normalization is not None:
        truth = truth - truth[0]
    console.print(Panel.fit(
        f"[bold]Stolen layer: {stolen.matrix.shape[0]} x {stolen.hidden_dim}[/bold]\n"
        f"affine-aligned RMS: [cyan]{format_scientific(aligned_rms(stolen.matrix, truth))}[/cyan]\n"
        f"{session.ledger.queries} queries",
        border_style="green",
    ))
    if out is not None:
        console.print(f"[dim]Wrote {write_matrix(out, stolen.matrix)}[/dim]")


@extract_app.command("layer-orthogonal")
def extract_layer_orthogonal_cmd(
    victim: str = typer.Option("sphere", "--victim", "-v", help=VICTIM_HELP),
    dim: int = typer.Option(..., "--dim", "-d", help="Hidden dimension (from `extract dim`)"),
    extra: int = typer.Option(8, "--extra", help="Queries beyond the determined count"),
    seed: int = typer.Option(0, "--seed", "-s"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the stolen matrix"),
):
    """Steal the final layer up to an orthogonal transformation (unit-scale norm victims)."""
    try:
        model, session, _ = _extract_session(victim, None, None, None)

        async def steal() -> Any:
            matrix = await collect_query_matrix(session, required_queries(dim) + extra, seed=seed)
            return matrix, extract_layer_orthogonal(matrix, dim)

        matrix, stolen = _spinner("Collecting logit vectors...", steal())
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    residual = orthogonal_residual(stolen.matrix, model.weights[matrix.columns])
    console.print(Panel.fit(
        f"[bold]Stolen layer: {stolen.matrix.shape[0]} x {stolen.hidden_dim}[/bold]\n"
        f"||O^T O - I||_F: [cyan]{format_scientific(orthogonality_error(residual))}[/cyan]\n"
        f"{session.ledger.queries} queries",
        border_style="green",
    ))
    if out is not None:
        console.print(f"[dim]Wrote {write_matrix(out, stolen.matrix)}[/dim]")


@extract_app.command("norm")
def extract_norm(
    victim: str = typer.Option("layernorm", "--victim", "-v", help=VICTIM_HELP),
    expected: int = typer.Option(16, "--expected", help="Initial dimension guess"),
    hidden_dim: Optional[int] = typer.Option(
        None, "--hidden-dim", help="Known width; a smaller stolen dimension is inconclusive"
    ),
    seed: int = typer.Option(0, "--seed", "-s"),
):
    """Fingerprint the normalization layer as LayerNorm or RMSNorm."""
    try:
        model, session, _ = _extract_session(victim, None, None, None)

        async def steal() -> Any:
            _, _, matrix = await steal_hidden_dim(session, expected, seed=seed)
            return detect_norm_layer(matrix, hidden_dim)

        detection = _spinner("Collecting logit vectors...", steal())
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    console.print(Panel.fit(
        f"[bold]Detected: [cyan]{detection.value}[/cyan][/bold]\n"
        f"configured: {model.spec.norm_kind.value}"
        f"{' with bias' if model.spec.norm_bias_enabled else ''}",
        border_style="green",
    ))


# ============================================================================
# sweep / run / report
# ============================================================================


def _experiment(
    suite: Optional[str],
    experiments: Path,
    victim: Optional[str],
    seeds: Optional[str],
    output: Optional[Path],
    transport: Optional[str] = None,
) -> ExperimentConfig:
    overrides: dict[str, Any] = {}
    if seeds:
        overrides["seeds"] = [int(s) for s in seeds.split(",")]
    if output is not None:
        overrides["output_dir"] = output
    if transport:
        overrides["transport"] = TransportKind(transport)
    if victim:
        overrides["victims"] = [_load_spec(victim)]
    if suite:
        return load_experiment(suite, experiments, overrides=overrides)
    return experiment_from_dict({}, "sweep", overrides=overrides)


@app.command()
def sweep(
    defense: str = typer.Argument(..., help="noise | quantization | spoofing | bias_xor_logprobs "
                                            "| block_list | bias_rate_limit"),
    victim: Optional[str] = typer.Option("layer_steal", "--victim", "-v", help=VICTIM_HELP),
    suite: Optional[str] = typer.Option(None, "--suite", help="Take ranges from this suite"),
    experiments: Path = typer.Option(DEFAULT_EXPERIMENTS_PATH, "--experiments"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Comma-separated seeds"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write report files here"),
):
    """Rerun attacks against a defended victim or API."""
    try:
        kind = DefenseKind(defense)
        experiment = _experiment(suite, experiments, None if suite else victim, seeds, output)
        result = _spinner(
            f"Sweeping {kind.value}...", DefenseSweepAgent({"quiet": True}).run(experiment, kind)
        )
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    _display_report(result.data["report"], f"Defense sweep: {kind.value}")
    console.print(f"[dim]{result.summary()}[/dim]")


@app.command()
def run(
    suite: str = typer.Argument(..., help="Suite name from the experiments file"),
    experiments: Path = typer.Option(DEFAULT_EXPERIMENTS_PATH, "--experiments"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Comma-separated seeds"),
    transport: Optional[str] = typer.Option(None, "--transport", help="in_process | asgi | http"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write report files here"),
):
    """Run a named experiment suite end to end."""
    try:
        experiment = _experiment(suite, experiments, None, seeds, output, transport)
        result = _spinner(
            f"Running suite {suite}...", AttackSuiteAgent({"quiet": True}).run(experiment)
        )
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    _display_report(result.data["report"], f"Suite {suite}")
    for error in result.errors:
        console.print(f"[yellow]  {error}[/yellow]")
    console.print(f"[dim]{result.summary()}[/dim]")


@report_app.command("lower-bound")
def report_lower_bound(
    bias_bound: float = typer.Option(100.0, "--bias-bound", "-B"),
    n: int = typer.Option(300, "--n", "-N", help="Biased tokens per query"),
    bits: str = typer.Option(
        ",".join(f"{b:g}" for b in DEFAULT_BIT_TARGETS), "--bits", help="Comma-separated targets"
    ),
    measure: bool = typer.Option(True, "--measure/--no-measure", help="Run the attacks too"),
    victim: str = typer.Option("lower_bound", "--victim", "-v", help=VICTIM_HELP),
    max_rounds: int = typer.Option(DEFAULT_MAX_ROUNDS, "--max-rounds"),
    seed: int = typer.Option(0, "--seed", "-s"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Write lower_bound.csv"),
):
    """Tabulate the query lower bound against measured logprob-free costs."""
    try:
        targets = [float(b) for b in bits.split(",")]
        if measure:
            api = ApiConfig(mode=ApiMode.ARGMAX_ONLY, bias_bound=bias_bound, bias_max_entries=n)
            result = _spinner(
                "Measuring logprob-free attacks...",
                LowerBoundAgent({"quiet": True}).run(
                    _load_spec(victim), targets, api, seed=seed, max_rounds=max_rounds
                ),
            )
            frame = result.data["table"]
            errors = result.errors
        else:
            frame = lower_bound_table(bias_bound, n, targets)
            errors = []
    except (StealerError, ValueError, OSError) as e:
        _fail(str(e))

    table = Table(title=f"Query lower bound (B={bias_bound:g}, N={n})")
    table.add_column("Bits", justify="right", style="cyan")
    table.add_column("Epsilon", justify="right")
    table.add_column("Bound", justify="right", style="bold")
    attacks = [c for c in frame.columns if f"{c}_gap" in frame.columns]
    for attack_name in attacks:
        table.add_column(attack_name, justify="right")
        table.add_column("gap", justify="right")
    table.add_column("Flag")
    for row in frame.to_dict("records"):
        cells = [f"{row['bits']:g}", format_scientific(row["epsilon"]), format_cost(row["bound"])]
        for attack_name in attacks:
            converged = row[f"{attack_name}_converged"]
            cells.append(format_cost(row[attack_name]) + ("" if converged else "*"))
            cells.append(format_cost(row[f"{attack_name}_gap"]))
        cells.append("[red]BEATS BOUND[/red]" if row["beats_bound"] else "")
        table.add_row(*cells)
    console.print(table)
    if measure:
        console.print("[dim]* round cap hit before reaching the target[/dim]")

    if output is not None:
        output.mkdir(parents=True, exist_ok=True)
        path = output / "lower_bound.csv"
        frame.to_csv(path, index=False)
        console.print(f"[dim]Wrote {path}[/dim]")
    if errors:
        _fail("; ".join(errors))


@app.command()
def version():
    """Show version information."""
    console.print(f"[bold]logit-stealer[/bold] v{__version__}")


if __name__ == "__main__":
    app()
