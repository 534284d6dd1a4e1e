use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use batchps::boundary::cnc0_residual;
use batchps::inversion::{
    conditional_survival, conditional_survival_grid, levels_for_tail, unconditional_survival, InversionConfig,
    TransformSet,
};
use batchps::kernels::{MomentTable, DEFAULT_REL_TOL};
use batchps::model::stationary_occupancy;
use batchps::oracles::{ctmc, ode, sim, Chain};
use batchps::report::{self, bracket_table, simulation_table, unconditional_table, ReportOptions, Table};
use batchps::spectral::SpectralData;
use batchps::transform::{Transform, TransformConfig};
use batchps::{Error, ModelParams};

#[derive(Parser, Debug)]
#[command(name = "batchps", version, about = "Batch sojourn times in the processor-sharing queue")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON scenario file with keys rho, q and optionally n_max, b_max, tol, seed.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    rho: Option<f64>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    b_max: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roots and weights of the characteristic polynomial.
    Spectral {
        #[arg(long, default_value_t = 1.0)]
        s: f64,
    },
    /// Moment integrals and right-hand sides.
    Kernels {
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long)]
        bmax: Option<usize>,
    },
    /// Boundary coefficients and their residuals.
    Boundary {
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long)]
        bmax: Option<usize>,
    },
    /// Conditional transforms on the (n, b) grid.
    Transform {
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        bmax: Option<usize>,
    },
    /// Conditional survival curve of one (n, b).
    Invert {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        b: usize,
        #[arg(long, default_value = DEFAULT_XGRID)]
        xgrid: String,
    },
    /// Stationary survival curve.
    Unconditional {
        #[arg(long, default_value = DEFAULT_XGRID)]
        xgrid: String,
    },
    /// Reference solutions.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
    },
    /// Acceptance criteria and consistency checks; exit code 0 iff all pass.
    Compare {
        /// Multiply E_1(s, q) by this factor everywhere the pipeline uses it.
        #[arg(long)]
        corrupt_e1: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        batches: usize,
    },
    /// The full pipeline with default outputs.
    Run {
        #[arg(long, default_value = DEFAULT_XGRID)]
        xgrid: String,
        /// Conditional curves are written for n, b up to this size.
        #[arg(long, default_value_t = 4)]
        grid: usize,
    },
}

#[derive(Subcommand, Debug)]
enum OracleKind {
    Ode(OracleArgs),
    Ctmc(OracleArgs),
    Sim {
        #[arg(long, default_value = "0.5:4:0.5")]
        xgrid: String,
        #[arg(long, default_value_t = 1_000_000)]
        batches: usize,
        #[arg(long, default_value_t = 4)]
        replications: usize,
    },
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    #[arg(long, default_value_t = 400)]
    ntrunc: usize,
    #[arg(long, default_value_t = 4)]
    btrunc: usize,
    /// Rows are written for n up to this value.
    #[arg(long, default_value_t = 4)]
    nmax: usize,
    #[arg(long, default_value = "0.5:4:0.5")]
    xgrid: String,
}

const DEFAULT_XGRID: &str = "0.05:10:0.05";
const DEFAULT_SEED: u64 = 1;

enum Failure {
    Invalid(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_invalid_input() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Compute(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn stage<T>(name: &str, r: batchps::Result<T>) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Invalid(m) => Failure::Invalid(format!("{name}: {m}")),
        Failure::Compute(m) => Failure::Compute(format!("{name}: {m}")),
    })
}

struct Context {
    params: ModelParams,
    seed: u64,
    out_dir: PathBuf,
}

impl Context {
    fn from_global(g: &Global) -> CliResult<Self> {
        let mut value = match &g.scenario {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Invalid(format!("cannot read scenario {}: {e}", path.display())))?;
                serde_json::from_str::<serde_json::Value>(&text)
                    .map_err(|e| Failure::Invalid(format!("scenario {}: {e}", path.display())))?
            }
            None => json!({ "rho": 0.5, "q": 0.2 }),
        };
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Failure::Invalid("scenario must be a JSON object".into()))?;
        let file_seed = obj.remove("seed").and_then(|v| v.as_u64());
        if let Some(v) = g.rho {
            obj.insert("rho".into(), json!(v));
        }
        if let Some(v) = g.q {
            obj.insert("q".into(), json!(v));
        }
        if let Some(v) = g.n_max {
            obj.insert("n_max".into(), json!(v));
        }
        if let Some(v) = g.b_max {
            obj.insert("b_max".into(), json!(v));
        }
        if let Some(v) = g.tol {
            obj.insert("tol".into(), json!(v));
        }
        let params: ModelParams =
            serde_json::from_value(value).map_err(|e| Failure::Invalid(format!("scenario: {e}")))?;
        stage("model", params.validate())?;
        Ok(Context {
            params,
            seed: g.seed.or(file_seed).unwrap_or(DEFAULT_SEED),
            out_dir: g.out_dir.clone(),
        })
    }

    /// Hash of the scenario, seed and command arguments.
    fn digest(&self, command: &str, args: &serde_json::Value) -> String {
        let canonical = json!({
            "command": command,
            "args": args,
            "params": self.params,
            "seed": self.seed,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }

    fn comments(&self, command: &str, digest: &str) -> Vec<String> {
        vec![
            format!("batchps {command}"),
            format!("scenario sha256 {digest}"),
            format!("seed {}", self.seed),
            format!(
                "rho {:?} q {:?} n_max {} b_max {} tol {:?}",
                self.params.rho, self.params.q, self.params.n_max, self.params.b_max, self.params.tol
            ),
        ]
    }

    fn path(&self, stem: &str, digest: &str, ext: &str) -> PathBuf {
        self.out_dir.join(format!("{stem}-{}-seed{}.{ext}", &digest[..16], self.seed))
    }

    fn write(&self, path: &Path, contents: &str) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir)
            .and_then(|_| fs::write(path, contents))
            .map_err(|e| Failure::Compute(format!("cannot write {}: {e}", path.display())))?;
        println!("{}", path.display());
        Ok(())
    }

    fn write_json<T: Serialize>(&self, stem: &str, command: &str, args: serde_json::Value, body: &T) -> CliResult<PathBuf> {
        let digest = self.digest(command, &args);
        let doc = json!({
            "command": command,
            "scenario_sha256": digest,
            "seed": self.seed,
            "params": self.params,
            "args": args,
            "result": body,
        });
        let path = self.path(stem, &digest, "json");
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Compute(e.to_string()))? + "\n";
        self.write(&path, &text)?;
        Ok(path)
    }

    fn write_table(&self, stem: &str, command: &str, args: serde_json::Value, build: impl FnOnce(Vec<String>) -> Table) -> CliResult<PathBuf> {
        let digest = self.digest(command, &args);
        let table = build(self.comments(command, &digest));
        let path = self.path(stem, &digest, "csv");
        self.write(&path, &table.to_csv())?;
        Ok(path)
    }
}

/// Parses `start:stop:step` into `start, start + step, ...` up to `stop`.
fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Failure::Invalid(format!("grid {spec:?}: {e}")))?;
    let [start, stop, step] = parts[..] else {
        return Err(Failure::Invalid(format!("grid {spec:?} must be start:stop:step")));
    };
    if !(start > 0.0 && step > 0.0 && stop >= start) {
        return Err(Failure::Invalid(format!("grid {spec:?} needs 0 < start <= stop and step > 0")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        return Err(Failure::Invalid(format!("grid {spec:?} has {count} points")));
    }
    // Rounded to 12 significant digits so 0.05 * 3 prints as 0.15.
    Ok((0..count)
        .map(|i| format!("{:.11e}", start + i as f64 * step).parse().unwrap())
        .collect())
}

fn transform_pair(params: &ModelParams, s: f64, levels: usize) -> CliResult<(SpectralData, Transform)> {
    let sd = stage("spectral", SpectralData::new(params, s))?;
    let t = stage("transform", Transform::build(params, s, levels, &TransformConfig::default()))?;
    Ok((sd, t))
}

fn boundary_json(params: &ModelParams, s: f64, b_max: usize) -> CliResult<serde_json::Value> {
    let (sd, t) = transform_pair(params, s, b_max)?;
    let residual = stage("boundary", cnc0_residual(&sd, &t.boundary, 1e-12))?;
    Ok(json!({
        "s": s,
        "e": t.boundary.e,
        "residual": residual,
        "source": t.boundary.source,
        "error_bound": t.boundary.error_bound,
        "triangular": t.triangular.e,
        "triangular_residual": t.triangular.residual,
    }))
}

fn conditional_rows(points: &[Vec<Vec<batchps::inversion::SurvivalPoint>>], comments: Vec<String>) -> Table {
    let mut t = Table::new(&["x", "n", "b", "survival", "clamped", "error", "order"], &comments);
    for row in points {
        for (n, by_b) in row.iter().enumerate() {
            for (k, p) in by_b.iter().enumerate() {
                t.rows
                    .push(vec![p.x, n as f64, (k + 1) as f64, p.survival, p.clamped, p.error, p.order as f64]);
            }
        }
    }
    t
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Compute(e.to_string()))?;
    }
    let ctx = Context::from_global(&cli.global)?;
    let p = ctx.params;
    match cli.command {
        Command::Spectral { s } => {
            let sd = stage("spectral", SpectralData::new(&p, s))?;
            let body = json!({ "spectral": sd, "identities": sd.identity_residuals() });
            ctx.write_json("spectral", "spectral", json!({ "s": s }), &body)?;
        }
        Command::Kernels { s, bmax } => {
            let b_max = bmax.unwrap_or(p.b_max);
            let sd = stage("spectral", SpectralData::new(&p, s))?;
            let t = stage("kernels", MomentTable::compute(&sd, b_max, DEFAULT_REL_TOL))?;
            let m: Vec<Vec<f64>> = (1..=b_max).map(|b| (0..=b).map(|l| t.m(b, l)).collect()).collect();
            let m_err: Vec<Vec<f64>> = (1..=b_max).map(|b| (0..=b).map(|l| t.m_err(b, l)).collect()).collect();
            let k: Vec<f64> = (1..=b_max).map(|b| t.k(b)).collect();
            let body = json!({ "s": s, "m": m, "m_err": m_err, "k": k });
            ctx.write_json("kernels", "kernels", json!({ "s": s, "bmax": b_max }), &body)?;
        }
        Command::Boundary { s, bmax } => {
            let b_max = bmax.unwrap_or(p.b_max);
            let body = boundary_json(&p, s, b_max)?;
            ctx.write_json("boundary", "boundary", json!({ "s": s, "bmax": b_max }), &body)?;
        }
        Command::Transform { s, nmax, bmax } => {
            let (n_max, b_max) = (nmax.unwrap_or(p.n_max), bmax.unwrap_or(p.b_max));
            let (_, t) = transform_pair(&p, s, b_max)?;
            let grid = t.conditional_grid(n_max);
            ctx.write_table("transform", "transform", json!({ "s": s, "nmax": n_max, "bmax": b_max }), |c| {
                let mut table = Table::new(&["s", "n", "b", "transform"], &c);
                for (n, row) in grid.iter().enumerate() {
                    for (k, v) in row.iter().enumerate() {
                        table.rows.push(vec![s, n as f64, (k + 1) as f64, *v]);
                    }
                }
                table
            })?;
        }
        Command::Invert { n, b, xgrid } => {
            let xs = parse_grid(&xgrid)?;
            let mut set = TransformSet::new(p, b, TransformConfig::default());
            let curve = stage("inversion", conditional_survival(&mut set, n, b, &xs, &InversionConfig::default()))?;
            ctx.write_table("invert", "invert", json!({ "n": n, "b": b, "xgrid": xgrid }), |c| {
                let mut table = Table::new(&["x", "survival", "clamped", "error", "order"], &c);
                for q in &curve {
                    table.rows.push(vec![q.x, q.survival, q.clamped, q.error, q.order as f64]);
                }
                table
            })?;
        }
        Command::Unconditional { xgrid } => {
            let xs = parse_grid(&xgrid)?;
            let curve = unconditional(&p, &xs)?;
            ctx.write_table("unconditional", "unconditional", json!({ "xgrid": xgrid }), |c| {
                unconditional_table(&curve, &c)
            })?;
        }
        Command::Oracle { kind } => match kind {
            OracleKind::Ode(a) | OracleKind::Ctmc(a) if a.btrunc == 0 => {
                return Err(Failure::Invalid("btrunc must be positive".into()));
            }
            OracleKind::Ode(a) => {
                let xs = parse_grid(&a.xgrid)?;
                let chain = stage("oracle", Chain::new(p.rho, p.batch(), a.ntrunc, a.btrunc))?;
                let grids = stage("oracle", ode::survival(&chain, &xs, &ode::OdeOptions::default()))?;
                ctx.write_table("oracle-ode", "oracle ode", json!(a), |c| {
                    bracket_table(&grids, a.nmax, a.btrunc, &c)
                })?;
            }
            OracleKind::Ctmc(a) => {
                let xs = parse_grid(&a.xgrid)?;
                let chain = stage("oracle", Chain::new(p.rho, p.batch(), a.ntrunc, a.btrunc))?;
                let grids = stage("oracle", ctmc::survival(&chain, &xs))?;
                ctx.write_table("oracle-ctmc", "oracle ctmc", json!(a), |c| {
                    bracket_table(&grids, a.nmax, a.btrunc, &c)
                })?;
            }
            OracleKind::Sim {
                xgrid,
                batches,
                replications,
            } => {
                let xs = parse_grid(&xgrid)?;
                let cfg = sim::SimConfig {
                    batches,
                    replications,
                    seed: ctx.seed,
                    ..Default::default()
                };
                let r = stage("simulation", sim::simulate(p.rho, &p.batch(), &xs, &cfg))?;
                let args = json!({ "xgrid": xgrid, "batches": batches, "replications": replications });
                ctx.write_table("oracle-sim", "oracle sim", args.clone(), |c| simulation_table(&r, &c))?;
                ctx.write_json("oracle-sim", "oracle sim", args, &r)?;
            }
        },
        Command::Compare { corrupt_e1, batches } => {
            let mut opts = ReportOptions::new(p, ctx.seed);
            opts.corrupt_e1 = corrupt_e1;
            opts.sim_batches = batches;
            let rep = report::compare(&opts);
            for c in rep.criteria.iter().chain(&rep.checks) {
                println!("{}", c.line());
            }
            ctx.write_json(
                "compare",
                "compare",
                json!({ "corrupt_e1": corrupt_e1, "batches": batches }),
                &rep,
            )?;
            if !rep.passed {
                return Err(Failure::Compute("acceptance criteria failed".into()));
            }
        }
        Command::Run { xgrid, grid } => {
            let xs = parse_grid(&xgrid)?;
            let sd = stage("spectral", SpectralData::new(&p, 1.0))?;
            let body = json!({ "spectral": sd, "identities": sd.identity_residuals() });
            let mut artifacts = vec![ctx.write_json("spectral", "spectral", json!({ "s": 1.0 }), &body)?];
            let body = boundary_json(&p, 1.0, p.b_max)?;
            artifacts.push(ctx.write_json("boundary", "boundary", json!({ "s": 1.0, "bmax": p.b_max }), &body)?);
            let b_grid = grid.min(p.b_max).max(1);
            let mut set = TransformSet::new(p, b_grid, TransformConfig::default());
            let curves = stage(
                "inversion",
                conditional_survival_grid(&mut set, grid.min(p.n_max), &xs, &InversionConfig::default()),
            )?;
            artifacts.push(ctx.write_table(
                "conditional",
                "run conditional",
                json!({ "xgrid": xgrid, "grid": grid }),
                |c| conditional_rows(&curves, c),
            )?);
            let curve = unconditional(&p, &xs)?;
            artifacts.push(ctx.write_table("unconditional", "unconditional", json!({ "xgrid": xgrid }), |c| {
                unconditional_table(&curve, &c)
            })?);
            let names: Vec<String> = artifacts
                .iter()
                .filter_map(|a| a.file_name().map(|f| f.to_string_lossy().into_owned()))
                .collect();
            ctx.write_json("manifest", "run", json!({ "xgrid": xgrid, "grid": grid }), &names)?;
        }
    }
    Ok(())
}

fn unconditional(p: &ModelParams, xs: &[f64]) -> CliResult<Vec<batchps::inversion::UnconditionalPoint>> {
    let occ = stage("model", stationary_occupancy(p))?;
    let levels = levels_for_tail(p, p.tol.max(1e-9));
    let mut set = TransformSet::new(*p, levels, TransformConfig::default());
    stage(
        "inversion",
        unconditional_survival(&mut set, &occ, xs, &InversionConfig::default()),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("invalid input: {m}");
            ExitCode::from(2)
        }
    }
}
