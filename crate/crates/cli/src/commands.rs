//! Subcommand implementations. Each writes its data files first, then
//! prints a one-line human summary to stdout (or returns a check failure,
//! which the caller prints and maps to exit code 3).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};

use qac::experiments::{render_campaign_csv, run_campaign, Campaign};
use qac::fixtures;
use qac::graph::{random_strongly_connected, Digraph, TransmissionPolicy};
use qac::meta;
use qac::oracle::check_token_bound;
use qac::sim::{
    parse_schedule, render_trace_csv, run, PolicyChoice, RoundSchedule, RunResult, ScheduleMode,
    SimConfig, TraceRecord,
};

use crate::{BoundCheckArgs, CampaignArgs, CmdResult, Failure, GenGraphArgs, ReplayArgs, RunArgs};

/// Load a digraph from a path, or from the built-in fixtures by id.
fn resolve_graph(spec: &str) -> Result<(Digraph, String), Failure> {
    let (text, name) = match spec {
        "fig1" => (fixtures::FIG1_EDGE_LIST.to_string(), "fig1".to_string()),
        "fig2" => (fixtures::FIG2_EDGE_LIST.to_string(), "fig2".to_string()),
        path => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading graph file {path}"))
                .map_err(Failure::validation)?;
            (text, path.to_string())
        }
    };
    let graph = Digraph::parse_edge_list(&text).map_err(Failure::validation)?;
    Ok((graph, name))
}

fn parse_init(text: &str) -> Result<Vec<i64>, Failure> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<i64>()
                .map_err(|_| Failure::Validation(anyhow!("invalid initial value `{}`", tok.trim())))
        })
        .collect()
}

fn init_display(values: &[i64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_output(dir: &str, name: &str, content: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {dir}"))
        .map_err(Failure::validation)?;
    let path = Path::new(dir).join(name);
    fs::write(&path, content)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::validation)?;
    Ok(path)
}

/// `{8,9}` for a two-value target, `{6}` when floor and ceiling coincide.
fn target_set(floor: i64, ceil: i64) -> String {
    if floor == ceil {
        format!("{{{floor}}}")
    } else {
        format!("{{{floor},{ceil}}}")
    }
}

fn estimates_display(result: &RunResult) -> String {
    let estimates: Vec<String> = result
        .final_estimates()
        .iter()
        .map(|q| q.to_string())
        .collect();
    format!("[{}]", estimates.join(","))
}

fn render_plot_csv(records: &[TraceRecord], header: &str) -> String {
    let mut out = String::from(header);
    out.push_str("k,node,qs\n");
    for rec in records {
        for (node, s) in rec.nodes.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", rec.k, node + 1, s.estimate));
        }
    }
    out
}

pub fn run_cmd(args: RunArgs) -> CmdResult {
    let (graph, graph_name) = resolve_graph(&args.graph)?;
    let init = parse_init(&args.init)?;
    if args.allow_weakly_connected && !graph.is_strongly_connected() {
        eprintln!(
            "warning: `{graph_name}` is not strongly connected; convergence is not guaranteed"
        );
    }
    let cfg = SimConfig {
        graph: &graph,
        initial_values: init.clone(),
        seed: args.seed,
        max_rounds: args.max_rounds,
        confirmation_window: args.window,
        policy: PolicyChoice::Uniform,
        mode: ScheduleMode::Random,
        allow_weakly_connected: args.allow_weakly_connected,
    };
    let result = run(&cfg).map_err(Failure::validation)?;

    let window = args.window.unwrap_or(graph.n() as u64).to_string();
    let header = meta::file_header(
        args.seed,
        &[
            ("command", "run".into()),
            ("graph", graph_name),
            ("graph_sha256", meta::content_hash(&graph.to_edge_list())),
            ("init", init_display(&init)),
            ("max_rounds", args.max_rounds.to_string()),
            ("window", window),
            ("mode", "random".into()),
        ],
    );
    write_output(
        &args.out,
        "trace.csv",
        &render_trace_csv(0, &result.records, Some(&header)),
    )?;
    if args.emit_plot_data {
        write_output(
            &args.out,
            "plot.csv",
            &render_plot_csv(&result.records, &header),
        )?;
    }

    let set = target_set(result.q_floor, result.q_ceil);
    match result.k0 {
        Some(k0) => {
            println!("converged k0={k0} qs in {set}");
            Ok(())
        }
        None => Err(Failure::Check(format!(
            "non-converged after {} rounds qs in {set}",
            result.rounds_executed()
        ))),
    }
}

pub fn replay(args: ReplayArgs) -> CmdResult {
    if args.target == "example1" {
        return replay_example1(&args);
    }

    let schedule_text = fs::read_to_string(&args.target)
        .with_context(|| format!("reading schedule file {}", args.target))
        .map_err(Failure::validation)?;
    let schedules = parse_schedule(&schedule_text).map_err(Failure::validation)?;
    let graph_spec = args
        .graph
        .as_deref()
        .ok_or_else(|| Failure::Validation(anyhow!("--graph is required with a schedule file")))?;
    let init_spec = args
        .init
        .as_deref()
        .ok_or_else(|| Failure::Validation(anyhow!("--init is required with a schedule file")))?;
    let (graph, graph_name) = resolve_graph(graph_spec)?;
    let init = parse_init(init_spec)?;

    let result = run_scripted(&graph, init.clone(), schedules, args.max_rounds)?;
    let header = meta::file_header(
        0,
        &[
            ("command", "replay".into()),
            ("schedule", args.target.clone()),
            ("schedule_sha256", meta::content_hash(&schedule_text)),
            ("graph", graph_name),
            ("graph_sha256", meta::content_hash(&graph.to_edge_list())),
            ("init", init_display(&init)),
            ("max_rounds", args.max_rounds.to_string()),
            ("mode", "scripted".into()),
        ],
    );
    write_output(
        &args.out,
        "trace.csv",
        &render_trace_csv(0, &result.records, Some(&header)),
    )?;
    if args.emit_plot_data {
        write_output(
            &args.out,
            "plot.csv",
            &render_plot_csv(&result.records, &header),
        )?;
    }

    let set = target_set(result.q_floor, result.q_ceil);
    match result.k0 {
        Some(k0) => {
            println!("converged k0={k0} qs in {set}");
            Ok(())
        }
        None => Err(Failure::Check(format!(
            "non-converged after {} rounds qs in {set}",
            result.rounds_executed()
        ))),
    }
}

fn replay_example1(args: &ReplayArgs) -> CmdResult {
    let graph = fixtures::fig1();
    let init = fixtures::example1_initial_values();
    let result = run_scripted(
        &graph,
        init.clone(),
        fixtures::example1_schedule(),
        args.max_rounds,
    )?;

    let header = meta::file_header(
        0,
        &[
            ("command", "replay".into()),
            ("schedule", "example1".into()),
            ("graph", "fig1".into()),
            ("init", init_display(&init)),
            ("mode", "scripted".into()),
        ],
    );
    write_output(
        &args.out,
        "trace.csv",
        &render_trace_csv(0, &result.records, Some(&header)),
    )?;
    if args.emit_plot_data {
        write_output(
            &args.out,
            "plot.csv",
            &render_plot_csv(&result.records, &header),
        )?;
    }

    let mismatches = fixtures::diff_golden(&result.records, &fixtures::example1_golden());
    match mismatches.first() {
        None => {
            println!("PASS final qs = {}", estimates_display(&result));
            Ok(())
        }
        Some(first) => Err(Failure::Check(format!("FAIL {first}"))),
    }
}

fn run_scripted(
    graph: &Digraph,
    init: Vec<i64>,
    schedules: Vec<RoundSchedule>,
    max_rounds: u64,
) -> Result<RunResult, Failure> {
    let cfg = SimConfig {
        graph,
        initial_values: init,
        seed: 0,
        max_rounds,
        confirmation_window: None,
        policy: PolicyChoice::Uniform,
        mode: ScheduleMode::Scripted(schedules),
        allow_weakly_connected: false,
    };
    run(&cfg).map_err(Failure::validation)
}

pub fn campaign(args: CampaignArgs) -> CmdResult {
    let config_text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading campaign config {}", args.config))
        .map_err(Failure::validation)?;
    let mut campaign = Campaign::from_toml(&config_text).map_err(Failure::validation)?;
    if let Some(n) = args.num_graphs {
        campaign.num_graphs = n;
    }
    if let Some(seed) = args.seed {
        campaign.master_seed = seed;
    }
    if let Some(rounds) = args.max_rounds {
        campaign.max_rounds = rounds;
    }
    campaign.keep_traces = args.emit_plot_data;

    let result = match args.parallel {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building worker pool")
            .map_err(Failure::validation)?
            .install(|| run_campaign(&campaign)),
        None => run_campaign(&campaign),
    }
    .map_err(Failure::validation)?;

    let header = meta::file_header(
        campaign.master_seed,
        &[
            ("command", "campaign".into()),
            ("config", args.config.clone()),
            ("config_sha256", meta::content_hash(&config_text)),
            ("num_graphs", campaign.num_graphs.to_string()),
            ("max_rounds", campaign.max_rounds.to_string()),
        ],
    );
    write_output(
        &args.out,
        "runs.csv",
        &render_campaign_csv(&result, Some(&header)),
    )?;
    if args.emit_plot_data {
        for record in &result.runs {
            if let Some(trace) = &record.trace {
                write_output(
                    &args.out,
                    &format!("plot_run{}.csv", record.run_id),
                    &render_plot_csv(trace, &header),
                )?;
            }
        }
    }

    let converged = result.runs.iter().filter(|r| r.converged).count();
    let total = result.runs.len();
    let mut summary = format!("campaign converged {converged}/{total} runs");
    if let (Some(mean), Some(median), Some(max)) = (result.k0_mean, result.k0_median, result.k0_max)
    {
        summary.push_str(&format!(" k0 mean={mean:.2} median={median} max={max}"));
    }
    if converged == total {
        println!("{summary}");
        Ok(())
    } else {
        Err(Failure::Check(summary))
    }
}

pub fn bound_check(args: BoundCheckArgs) -> CmdResult {
    let (graph, graph_name) = resolve_graph(&args.graph)?;
    if !graph.is_strongly_connected() {
        return Err(Failure::Validation(anyhow!(
            "digraph `{graph_name}` is not strongly connected"
        )));
    }
    let policy = TransmissionPolicy::uniform(&graph);
    let check = check_token_bound(&policy, &graph);

    let header = meta::file_header(
        0,
        &[
            ("command", "bound-check".into()),
            ("graph", graph_name),
            ("graph_sha256", meta::content_hash(&graph.to_edge_list())),
        ],
    );
    let csv = format!(
        "{header}min_entry,bound,holds\n{},{},{}\n",
        check.min_entry, check.bound, check.holds
    );
    write_output(&args.out, "bound.csv", &csv)?;

    let line = format!(
        "min={}, bound={}, {}",
        check.min_entry,
        check.bound,
        if check.holds { "HOLDS" } else { "VIOLATED" }
    );
    if check.holds {
        println!("{line}");
        Ok(())
    } else {
        Err(Failure::Check(line))
    }
}

pub fn gen_graph(args: GenGraphArgs) -> CmdResult {
    let graph = random_strongly_connected(args.n, args.extra_edge_prob, args.seed)
        .map_err(Failure::validation)?;
    let header = meta::file_header(
        args.seed,
        &[
            ("command", "gen-graph".into()),
            ("n", args.n.to_string()),
            ("extra_edge_prob", args.extra_edge_prob.to_string()),
        ],
    );
    let content = format!("{header}{}", graph.to_edge_list());
    let path = write_output(
        &args.out,
        &format!("graph-n{}-seed{}.edges", args.n, args.seed),
        &content,
    )?;
    println!("{}", path.display());
    Ok(())
}
