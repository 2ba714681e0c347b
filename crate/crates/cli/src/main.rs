//! `hybrid-bev`: ingest trip recordings, run the physics baseline, test for
//! trip heterogeneity, fit and cross-validate corrective models.
//!
//! Logs go to standard error (`HYBRID_BEV_LOG=info|debug|...`); every output
//! file is written under `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hybrid_bev::dataset::{
    channel, prepare_trip, read_manifest_trips, read_panel, write_panel, ChargingThresholds, DesignLayout, Manifest,
    PanelDataset, Prepared, Schema,
};
use hybrid_bev::ensemble::{importance_table, DEFAULT_MARGINAL_DRAWS};
use hybrid_bev::eval::{
    generate_synthetic, grid_search, grid_to_csv, loocv, RecipeConfig, RecipeKind, SyntheticConfig,
};
use hybrid_bev::mixed::{fit_null_lmm, fit_null_lmm_groups, icc, Formula};
use hybrid_bev::model::FittedModel;
use hybrid_bev::par;
use hybrid_bev::physics::{annotate_panel, VehicleSpec, DEFAULT_SOC0};

const EXIT_FAILED_FOLDS: u8 = 2;

#[derive(Parser)]
#[command(
    name = "hybrid-bev",
    version,
    about = "Hybrid physics + statistical energy prediction for BEV trips"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON file with default values for any of the flags below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core, 1 runs serially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw trip CSVs, downsample, drop charging trips, fill gaps.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// `canonical`, `tum`, or a JSON file mapping column names to roles.
        #[arg(long, default_value = "canonical")]
        schema: String,
        /// Keep every n-th sample.
        #[arg(long)]
        downsample: Option<usize>,
    },
    /// Add the physics prediction and its residual to every trip.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Null random-intercept model of the physics residual.
    Icc {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Grouping::TripId)]
        grouping: Grouping,
        #[command(flatten)]
        physics: PhysicsArgs,
    },
    /// Fit a recipe on the whole panel and save the model.
    Fit(ModelCmd),
    /// Leave-one-trip-out evaluation of a recipe.
    Evaluate(ModelCmd),
    /// One-at-a-time hyperparameter sweep, each cell a full evaluation.
    Grid {
        #[command(flatten)]
        cmd: ModelCmd,
        /// `name=v1,v2,...`; repeatable. Defaults depend on the recipe.
        #[arg(long = "vary")]
        vary: Vec<String>,
    },
    /// Marginalization importance of each feature.
    Importance {
        #[command(flatten)]
        cmd: ModelCmd,
        /// Previously saved model; its `layout.json` must sit beside it.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MARGINAL_DRAWS)]
        draws: usize,
    },
    /// Write a synthetic panel with known components.
    Synth {
        #[arg(long, default_value_t = 50)]
        trips: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        sigma_b: Option<f64>,
        #[arg(long)]
        sigma_eps: Option<f64>,
        #[arg(long)]
        amp_time: Option<f64>,
        #[arg(long)]
        amp_temp: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Grouping {
    TripId,
    Route,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilyArg {
    Gaussian,
    StudentT,
}

#[derive(Args, Clone)]
struct PhysicsArgs {
    /// Vehicle specification JSON; defaults to the built-in vehicle.
    #[arg(long)]
    vehicle: Option<PathBuf>,
    /// Share of braking power recovered, overriding the vehicle file.
    #[arg(long)]
    recuperation: Option<f64>,
}

#[derive(Args, Clone)]
struct ModelCmd {
    #[arg(long)]
    manifest: PathBuf,
    /// gamm_gaussian, gamm_t, forest, boost, physics_only or data_only.
    #[arg(long)]
    recipe: Option<String>,
    /// Formula JSON; defaults to the full residual formula.
    #[arg(long)]
    formula: Option<PathBuf>,
    #[arg(long)]
    ntrees: Option<usize>,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long)]
    nsplit: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    knots: Option<usize>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[command(flatten)]
    physics: PhysicsArgs,
}

/// Defaults read from `--config`; any flag given on the command line wins.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    recipe: Option<String>,
    formula: Option<PathBuf>,
    vehicle: Option<PathBuf>,
    ntrees: Option<usize>,
    mtry: Option<usize>,
    nsplit: Option<usize>,
    lambda: Option<f64>,
    knots: Option<usize>,
    family: Option<FamilyArg>,
    recuperation: Option<f64>,
    downsample: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        self.write(name, &serde_json::to_string_pretty(value)?)
    }

    fn vehicle(&self, args: &PhysicsArgs) -> Result<VehicleSpec> {
        let spec = match args.vehicle.as_ref().or(self.cfg.vehicle.as_ref()) {
            Some(p) => VehicleSpec::load(p)?,
            None => VehicleSpec::default(),
        };
        match args.recuperation.or(self.cfg.recuperation) {
            Some(f) => Ok(spec.with_recuperation(f)?),
            None => Ok(spec),
        }
    }

    /// Reads an ingested panel and runs the physics model over it.
    fn simulated_panel(&self, manifest: &Path, physics: &PhysicsArgs) -> Result<PanelDataset> {
        let panel = read_panel(manifest, &Schema::canonical())?;
        Ok(annotate_panel(&self.vehicle(physics)?, &panel, DEFAULT_SOC0)?)
    }

    fn recipe(&self, cmd: &ModelCmd) -> Result<RecipeConfig> {
        let tag = cmd
            .recipe
            .clone()
            .or_else(|| self.cfg.recipe.clone())
            .unwrap_or_else(|| "boost".into());
        let mut kind: RecipeKind = tag.parse()?;
        if let Some(family) = cmd.family.or(self.cfg.family) {
            match (kind, family) {
                (RecipeKind::GammGaussian | RecipeKind::GammT, FamilyArg::Gaussian) => kind = RecipeKind::GammGaussian,
                (RecipeKind::GammGaussian | RecipeKind::GammT, FamilyArg::StudentT) => kind = RecipeKind::GammT,
                _ => log::warn!("--family only applies to GAMM recipes; ignored for {kind}"),
            }
        }
        let formula = match cmd.formula.as_ref().or(self.cfg.formula.as_ref()) {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading formula {}", p.display()))?;
                Formula::from_json(&text)?
            }
            None => Formula::full(channel::RESIDUAL_PHY),
        };
        let mut recipe = RecipeConfig::new(kind, formula);
        let counts = [
            ("ntrees", cmd.ntrees.or(self.cfg.ntrees)),
            ("mtry", cmd.mtry.or(self.cfg.mtry)),
            ("nsplit", cmd.nsplit.or(self.cfg.nsplit)),
            ("knots", cmd.knots.or(self.cfg.knots)),
        ];
        for (name, v) in counts {
            if let Some(v) = v {
                recipe.set(name, v as f64)?;
            }
        }
        if let Some(l) = cmd.lambda.or(self.cfg.lambda) {
            recipe.set("lambda", l)?;
        }
        Ok(recipe)
    }
}

fn schema(arg: &str) -> Result<Schema> {
    Ok(match arg {
        "canonical" => Schema::canonical(),
        "tum" => Schema::tum(),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading schema {path}"))?;
            Schema::from_json(&text)?
        }
    })
}

fn parse_vary(spec: &str) -> Result<(String, Vec<f64>)> {
    let Some((name, values)) = spec.split_once('=') else {
        bail!("--vary expects name=v1,v2,..., got `{spec}`");
    };
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad value `{v}` in --vary {name}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name.trim().to_string(), values))
}

fn default_grid(kind: RecipeKind) -> Vec<(String, Vec<f64>)> {
    let g = |n: &str, v: &[f64]| (n.to_string(), v.to_vec());
    match kind {
        RecipeKind::Forest => vec![g("ntrees", &[50.0, 100.0, 200.0]), g("mtry", &[2.0, 4.0, 6.0])],
        RecipeKind::Boost | RecipeKind::DataOnly => vec![
            g("ntrees", &[50.0, 100.0, 200.0]),
            g("nsplit", &[1.0, 2.0, 4.0]),
            g("lambda", &[0.01, 0.05, 0.1]),
        ],
        _ => vec![g("knots", &[10.0, 20.0, 30.0])],
    }
}

#[derive(Serialize)]
struct DroppedTrip {
    trip_id: String,
    reason: String,
}

#[derive(Serialize)]
struct IngestLog {
    kept: Vec<String>,
    dropped: Vec<DroppedTrip>,
}

#[derive(Serialize)]
struct IccReport {
    grouping: &'static str,
    sigma_b2: f64,
    sigma_w2: f64,
    icc: f64,
}

fn ingest(ctx: &Ctx, manifest: &Path, schema_arg: &str, downsample: Option<usize>) -> Result<()> {
    let schema = schema(schema_arg)?;
    let keep_every = downsample.or(ctx.cfg.downsample).unwrap_or(1);
    let m = Manifest::load(manifest)?;
    let raw = read_manifest_trips(&m, manifest, &schema)?
        .into_iter()
        .collect::<hybrid_bev::Result<Vec<_>>>()?;
    let thresholds = ChargingThresholds::default();
    let prepared = par::map(&raw, |t| prepare_trip(t, keep_every, &thresholds));
    let mut log_out = IngestLog {
        kept: Vec::new(),
        dropped: Vec::new(),
    };
    let mut kept = Vec::new();
    for p in prepared {
        match p? {
            Prepared::Kept(t) => {
                log_out.kept.push(t.trip_id().to_string());
                kept.push(t);
            }
            Prepared::Dropped { trip, reason } => {
                log::warn!("dropping trip `{trip}`: {reason}");
                log_out.dropped.push(DroppedTrip { trip_id: trip, reason });
            }
        }
    }
    if kept.is_empty() {
        bail!("no trips left after preprocessing");
    }
    let path = write_panel(&ctx.out.join("panel"), &PanelDataset::new(kept)?)?;
    ctx.write_json("ingest_log.json", &log_out)?;
    println!("{}", path.display());
    Ok(())
}

fn simulate(ctx: &Ctx, manifest: &Path, physics: &PhysicsArgs) -> Result<()> {
    let panel = ctx.simulated_panel(manifest, physics)?;
    let path = write_panel(&ctx.out.join("simulated"), &panel)?;
    println!("{}", path.display());
    Ok(())
}

fn icc_cmd(ctx: &Ctx, manifest: &Path, grouping: Grouping, physics: &PhysicsArgs) -> Result<()> {
    let panel = ctx.simulated_panel(manifest, physics)?;
    let (name, vc) = match grouping {
        Grouping::TripId => ("trip_id", fit_null_lmm(&panel, channel::RESIDUAL_PHY)?),
        Grouping::Route => {
            let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for trip in panel.trips() {
                let route = trip
                    .attribute(channel::ROUTE)
                    .with_context(|| format!("trip `{}` has no route", trip.trip_id()))?;
                groups
                    .entry(route.to_string())
                    .or_default()
                    .extend_from_slice(trip.require(channel::RESIDUAL_PHY)?);
            }
            let groups: Vec<Vec<f64>> = groups.into_values().collect();
            ("route", fit_null_lmm_groups(&groups)?)
        }
    };
    let report = IccReport {
        grouping: name,
        sigma_b2: vc.sigma_b2,
        sigma_w2: vc.sigma_w2,
        icc: icc(&vc)?,
    };
    let path = ctx.write_json("icc.json", &report)?;
    println!("{}", path.display());
    Ok(())
}

fn fit(ctx: &Ctx, cmd: &ModelCmd) -> Result<()> {
    let recipe = ctx.recipe(cmd)?;
    let panel = ctx.simulated_panel(&cmd.manifest, &cmd.physics)?;
    let response = recipe_response(&recipe);
    let layout = DesignLayout::fit(&panel, &recipe.formula.features())?;
    let design = layout.assemble(panel.trips(), Some(response))?;
    let model = recipe.fit_model(&design, ctx.seed)?;
    fs::create_dir_all(&ctx.out)?;
    model.save(&ctx.out.join("model.json"))?;
    ctx.write_json("layout.json", &layout)?;
    if let FittedModel::Gamm(g) = &model {
        ctx.write_json("summary.json", &g.summary())?;
    }
    println!("{}", ctx.out.join("model.json").display());
    Ok(())
}

fn recipe_response(recipe: &RecipeConfig) -> &'static str {
    use hybrid_bev::eval::Recipe;
    recipe.target().channel().unwrap_or(channel::RESIDUAL_PHY)
}

fn evaluate(ctx: &Ctx, cmd: &ModelCmd) -> Result<u8> {
    let recipe = ctx.recipe(cmd)?;
    let panel = ctx.simulated_panel(&cmd.manifest, &cmd.physics)?;
    let report = loocv(&panel, &recipe, ctx.seed)?;
    let (json, _) = report.write(&ctx.out, recipe.kind.tag())?;
    if let (Some(s), Some(p)) = (report.summary, report.physics_summary) {
        eprintln!(
            "{}: avg APE {:.4} (min {:.4}, max {:.4}); physics only {:.4}",
            recipe.kind, s.avg, s.min, s.max, p.avg
        );
    }
    println!("{}", json.display());
    Ok(if report.n_failed() > 0 {
        log::error!("{} fold(s) failed", report.n_failed());
        EXIT_FAILED_FOLDS
    } else {
        0
    })
}

fn grid(ctx: &Ctx, cmd: &ModelCmd, vary: &[String]) -> Result<u8> {
    let recipe = ctx.recipe(cmd)?;
    let grid = if vary.is_empty() {
        default_grid(recipe.kind)
    } else {
        vary.iter().map(|v| parse_vary(v)).collect::<Result<Vec<_>>>()?
    };
    let panel = ctx.simulated_panel(&cmd.manifest, &cmd.physics)?;
    let rows = grid_search(&panel, &recipe, &grid, ctx.seed)?;
    let path = ctx.write(&format!("grid_{}.csv", recipe.kind.tag()), &grid_to_csv(&rows)?)?;
    println!("{}", path.display());
    Ok(if rows.iter().any(|r| r.failed_folds > 0) {
        EXIT_FAILED_FOLDS
    } else {
        0
    })
}

fn importance(ctx: &Ctx, cmd: &ModelCmd, model_path: Option<&Path>, draws: usize) -> Result<()> {
    let panel = ctx.simulated_panel(&cmd.manifest, &cmd.physics)?;
    let (model, layout, response) = match model_path {
        Some(p) => {
            let layout_path = p.with_file_name("layout.json");
            let text =
                fs::read_to_string(&layout_path).with_context(|| format!("reading {}", layout_path.display()))?;
            let layout: DesignLayout = serde_json::from_str(&text)?;
            let recipe = ctx.recipe(cmd)?;
            (FittedModel::load(p)?, layout, recipe_response(&recipe))
        }
        None => {
            let recipe = ctx.recipe(cmd)?;
            let layout = DesignLayout::fit(&panel, &recipe.formula.features())?;
            let response = recipe_response(&recipe);
            let design = layout.assemble(panel.trips(), Some(response))?;
            (recipe.fit_model(&design, ctx.seed)?, layout, response)
        }
    };
    let design = layout.assemble(panel.trips(), Some(response))?;
    let mut table = importance_table(&model, &design, &layout.column_groups(), draws, ctx.seed)?;
    table.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut text = String::from("feature,importance\n");
    for (name, v) in &table {
        text.push_str(&format!("{name},{v}\n"));
    }
    let path = ctx.write(&format!("importance_{}.csv", model.kind()), &text)?;
    println!("{}", path.display());
    Ok(())
}

fn synth(ctx: &Ctx, config: SyntheticConfig) -> Result<()> {
    let (panel, truth) = generate_synthetic(&config)?;
    let path = write_panel(&ctx.out.join("synthetic"), &panel)?;
    ctx.write_json("synthetic_truth.json", &truth)?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(cfg.jobs).unwrap_or(0);
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        cfg,
        out: cli.out,
    };
    par::with_jobs(jobs, || match &cli.command {
        Command::Ingest {
            manifest,
            schema,
            downsample,
        } => ingest(&ctx, manifest, schema, *downsample).map(|_| 0),
        Command::Simulate { manifest, physics } => simulate(&ctx, manifest, physics).map(|_| 0),
        Command::Icc {
            manifest,
            grouping,
            physics,
        } => icc_cmd(&ctx, manifest, *grouping, physics).map(|_| 0),
        Command::Fit(cmd) => fit(&ctx, cmd).map(|_| 0),
        Command::Evaluate(cmd) => evaluate(&ctx, cmd),
        Command::Grid { cmd, vary } => grid(&ctx, cmd, vary),
        Command::Importance { cmd, model, draws } => importance(&ctx, cmd, model.as_deref(), *draws).map(|_| 0),
        Command::Synth {
            trips,
            samples,
            sigma_b,
            sigma_eps,
            amp_time,
            amp_temp,
        } => {
            let d = SyntheticConfig::default();
            synth(
                &ctx,
                SyntheticConfig {
                    n_trips: *trips,
                    samples_per_trip: *samples,
                    sigma_b: sigma_b.unwrap_or(d.sigma_b),
                    sigma_eps: sigma_eps.unwrap_or(d.sigma_eps),
                    amp_time: amp_time.unwrap_or(d.amp_time),
                    amp_temp: amp_temp.unwrap_or(d.amp_temp),
                    seed: ctx.seed,
                    ..d
                },
            )
            .map(|_| 0)
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYBRID_BEV_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
