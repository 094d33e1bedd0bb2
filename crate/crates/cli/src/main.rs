//! `nlx` — scenario runner for the nlos-explore simulator. Subcommands cover
//! every pipeline stage: `gen` synthesizes ground-truth maps, `scan` renders
//! one transient scan with its carving and back-projection artifacts,
//! `explore` runs the full sense-predict-plan loop, `eval` aggregates trace
//! CSVs into a summary table, and `render` rasterizes grids to PNG.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlos_explore::explore::{run_exploration, ExplorationTrace, Mode, TraceRecord};
use nlos_explore::grid::{BinaryGrid, CellState, GridKind, OccupancyGrid, Pose};
use nlos_explore::mapgen::{generate, MapGenParams, MapKind};
use nlos_explore::metrics::{aggregate, write_summary_csv};
use nlos_explore::nlos::{backproject, carve};
use nlos_explore::normals::estimate_normals;
use nlos_explore::ray::visible_cells;
use nlos_explore::render::{render_float_to_png, render_to_png, Overlays};
use nlos_explore::spad::{simulate_scan, write_scan_dump};

#[derive(Parser)]
#[command(
    name = "nlx",
    about = "NLOS-aided exploration simulator",
    after_help = config::CONFIG_KEY_HELP,
    after_long_help = config::CONFIG_KEY_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario config file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set explore.steps=200 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exploration loop and write trace CSVs plus final maps.
    Explore(ConfigArgs),
    /// Simulate one scan: histogram dump, back-projection, carved belief.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Scan pose as "x,y" in cell coordinates; defaults to the map's
        /// suggested start.
        #[arg(long)]
        pose: Option<String>,
    },
    /// Generate a ground-truth map (PGM).
    Gen {
        /// corridor|L_deadend|rooms|maze
        #[arg(long, default_value = "L_deadend")]
        kind: String,
        #[arg(long, default_value_t = 60)]
        width: usize,
        #[arg(long, default_value_t = 40)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        corridor_width: usize,
        #[arg(long, default_value_t = 4)]
        n_rooms: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output PGM path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate trace CSVs (mode inferred from file names) into a summary.
    Eval {
        /// Directory containing trace CSVs written by `explore`.
        #[arg(long)]
        traces: PathBuf,
        /// Horizon for coverage AUC, steps.
        #[arg(long, default_value_t = 1000.0)]
        t_max: f64,
        /// Summary CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rasterize a PGM grid to a color PNG.
    Render {
        /// Input grid (PGM).
        #[arg(long)]
        grid: PathBuf,
        /// ground_truth|belief
        #[arg(long, default_value = "belief")]
        kind: String,
        /// Output PNG path.
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Bad usage or configuration: exit 1.
    Config(String),
    /// Failure during execution: exit 2.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Explore(args) => cmd_explore(&args),
        Command::Scan { cfg, pose } => cmd_scan(&cfg, pose.as_deref()),
        Command::Gen {
            kind,
            width,
            height,
            corridor_width,
            n_rooms,
            seed,
            out,
        } => cmd_gen(&kind, width, height, corridor_width, n_rooms, seed, &out),
        Command::Eval { traces, t_max, out } => cmd_eval(&traces, t_max, out.as_deref()),
        Command::Render { grid, kind, out } => cmd_render(&grid, &kind, &out),
    }
}

fn load_config(args: &ConfigArgs) -> Result<config::Config, CliError> {
    config::load(args.config.as_deref(), &args.sets).map_err(CliError::Config)
}

fn cmd_explore(args: &ConfigArgs) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let gt = cfg.map().map_err(CliError::Config)?;
    let sensor = cfg.sensor().map_err(CliError::Config)?;
    let mut params = cfg.explore_params().map_err(CliError::Config)?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;

    let poses = cfg.start_poses(&gt);
    for (i, &start) in poses.iter().enumerate() {
        if gt.get(start.cell()) != CellState::Free {
            return Err(CliError::Config(format!(
                "explore.start[{i}] = ({}, {}) is not on a Free cell",
                start.x, start.y
            )));
        }
        if params.snapshot_interval > 0 {
            let snap_dir = out_dir.join(format!("snapshots_{i:02}"));
            std::fs::create_dir_all(&snap_dir).map_err(runtime)?;
            params.snapshot_dir = Some(snap_dir);
        }
        let trace = run_exploration(&gt, start, &sensor, &params).map_err(runtime)?;
        let mode = params.mode.as_str();
        let csv_path = out_dir.join(format!("trace_{mode}_{i:02}.csv"));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).map_err(runtime)?;
        std::fs::write(&csv_path, buf).map_err(runtime)?;
        trace
            .final_belief
            .save(out_dir.join(format!("belief_{mode}_{i:02}.pgm")))
            .map_err(runtime)?;
        let overlays = Overlays {
            carved: Some(&trace.carved),
            evidence: Some(&trace.final_evidence),
            robot: trace.records.last().map(|r| r.pose),
            ..Overlays::default()
        };
        render_to_png(
            &trace.final_belief,
            &overlays,
            out_dir.join(format!("belief_{mode}_{i:02}.png")),
        )
        .map_err(runtime)?;
        let last = trace.records.last().expect("trace has at least one record");
        println!(
            "run {i}: mode={mode} steps={} coverage={:.4} iou={:.4} -> {}",
            last.t,
            last.coverage,
            last.iou,
            csv_path.display()
        );
    }
    Ok(())
}

fn cmd_scan(args: &ConfigArgs, pose: Option<&str>) -> Result<(), CliError> {
    let cfg = load_config(args)?;
    let gt = cfg.map().map_err(CliError::Config)?;
    let sensor = cfg.sensor().map_err(CliError::Config)?;
    let params = cfg.explore_params().map_err(CliError::Config)?;
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir());
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;

    let pose = match pose {
        Some(s) => {
            let (x, y) = s
                .split_once(',')
                .ok_or_else(|| CliError::Config(format!("--pose {s:?}: expected \"x,y\"")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Config(format!("--pose {s:?}: {e}")))
            };
            Pose::new(parse(x)?, parse(y)?)
        }
        None => cfg.start_poses(&gt)[0],
    };
    if gt.get(pose.cell()) != CellState::Free {
        return Err(CliError::Config(format!(
            "pose ({}, {}) is not on a Free cell",
            pose.x, pose.y
        )));
    }

    let normals = estimate_normals(&gt);
    let mut sensor = sensor;
    sensor.record_secondary = true;
    let scan = simulate_scan(&gt, &normals, pose, &sensor);

    let dump_path = out_dir.join("scan.txt");
    let file = std::fs::File::create(&dump_path).map_err(runtime)?;
    write_scan_dump(&scan, std::io::BufWriter::new(file)).map_err(runtime)?;

    let bp = backproject(&scan, gt.width(), gt.height(), gt.resolution(), params.gap);
    bp.save(out_dir.join("backprojection.bpf")).map_err(runtime)?;
    render_float_to_png(&bp, out_dir.join("backprojection.png")).map_err(runtime)?;

    let mut belief = OccupancyGrid::unknown_like(&gt);
    for (c, s) in visible_cells(&gt, pose, sensor.n_primary, sensor.max_range) {
        belief.set(c, s);
    }
    let carved = carve(&mut belief, &scan, params.gap);
    belief.save(out_dir.join("carved.pgm")).map_err(runtime)?;
    let overlays = Overlays {
        carved: Some(&carved),
        robot: Some(pose),
        ..Overlays::default()
    };
    render_to_png(&belief, &overlays, out_dir.join("carved.png")).map_err(runtime)?;

    println!(
        "scan at ({}, {}): {} histograms, {} hidden deposits, {} carved cells -> {}",
        pose.x,
        pose.y,
        scan.histograms.len(),
        scan.secondary_deposits.len(),
        carved.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_gen(
    kind: &str,
    width: usize,
    height: usize,
    corridor_width: usize,
    n_rooms: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let kind: MapKind = kind.parse().map_err(CliError::Config)?;
    let params = MapGenParams {
        width,
        height,
        corridor_width,
        n_rooms,
        seed,
    };
    let grid = generate(kind, &params).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    grid.save(out).map_err(runtime)?;
    println!(
        "{kind:?} {width}x{height} seed {seed} -> {}",
        out.display()
    );
    Ok(())
}

/// Reconstruct a trace from its CSV; the mode comes from the file name
/// (`nlos`, `nearest`, else `los`), the per-step metrics from the rows.
fn read_trace_csv(path: &Path) -> Result<ExplorationTrace, CliError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let mode = if name.contains("nlos") {
        Mode::Nlos
    } else if name.contains("nearest") {
        Mode::NearestFrontier
    } else {
        Mode::Los
    };
    let text = std::fs::read_to_string(path).map_err(runtime)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "t,x,y,coverage,iou,frontier_id,path_len" {
        return Err(CliError::Runtime(format!(
            "{}: unrecognized trace header {header:?}",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(CliError::Runtime(format!(
                "{}:{}: expected 7 fields, got {}",
                path.display(),
                lineno + 2,
                f.len()
            )));
        }
        let bad = |e: &dyn std::fmt::Display| {
            CliError::Runtime(format!("{}:{}: {e}", path.display(), lineno + 2))
        };
        records.push(TraceRecord {
            t: f[0].parse().map_err(|e| bad(&e))?,
            pose: Pose::new(
                f[1].parse().map_err(|e| bad(&e))?,
                f[2].parse().map_err(|e| bad(&e))?,
            ),
            coverage: f[3].parse().map_err(|e| bad(&e))?,
            iou: f[4].parse().map_err(|e| bad(&e))?,
            frontier_id: f[5].parse().map_err(|e| bad(&e))?,
            path_len: f[6].parse().map_err(|e| bad(&e))?,
        });
    }
    Ok(ExplorationTrace {
        mode,
        records,
        final_belief: OccupancyGrid::new(1, 1, 0.1, CellState::Unknown),
        final_evidence: BinaryGrid::new(1, 1),
        carved: BTreeSet::new(),
        predicted_maps: Vec::new(),
    })
}

fn cmd_eval(traces_dir: &Path, t_max: f64, out: Option<&Path>) -> Result<(), CliError> {
    if t_max <= 0.0 {
        return Err(CliError::Config("--t-max must be positive".into()));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(traces_dir)
        .map_err(|e| CliError::Config(format!("--traces {}: {e}", traces_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "--traces {}: no trace CSVs found",
            traces_dir.display()
        )));
    }
    let traces = paths
        .iter()
        .map(|p| read_trace_csv(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = aggregate(&traces, t_max);
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf).map_err(runtime)?;
    match out {
        Some(path) => {
            std::fs::write(path, &buf).map_err(runtime)?;
            println!(
                "{} traces -> {} summary rows -> {}",
                traces.len(),
                rows.len(),
                path.display()
            );
        }
        None => print!("{}", String::from_utf8_lossy(&buf)),
    }
    Ok(())
}

fn cmd_render(grid: &Path, kind: &str, out: &Path) -> Result<(), CliError> {
    let kind = match kind {
        "ground_truth" => GridKind::GroundTruth,
        "belief" => GridKind::Belief,
        other => {
            return Err(CliError::Config(format!(
                "--kind: unknown kind {other:?} (expected ground_truth|belief)"
            )))
        }
    };
    let g = OccupancyGrid::load(grid, kind)
        .map_err(|e| CliError::Config(format!("--grid {}: {e}", grid.display())))?;
    render_to_png(&g, &Overlays::default(), out).map_err(runtime)?;
    println!("{} -> {}", grid.display(), out.display());
    Ok(())
}
