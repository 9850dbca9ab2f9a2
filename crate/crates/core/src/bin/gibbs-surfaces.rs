//! Command-line experiment runner.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gibbs_surfaces::cluster::{offset_bounds, swappable_set, synchronize_clusters, Triplet};
use gibbs_surfaces::config::{Boundary, Height};
use gibbs_surfaces::feasibility::{self, FeasibilityGraph};
use gibbs_surfaces::lattice::parse_dims;
use gibbs_surfaces::observables::{self, Quadrature, SigmaMethod, SigmaOptions};
use gibbs_surfaces::sampler::{cftp_sample, CftpOptions, HeatBath, SiteOrder, TorusChain};
use gibbs_surfaces::tilings::{self, SquareRegion};
use gibbs_surfaces::{verify, Error, Graph, HeightConfig, PeriodicPotential, RngStream};

#[derive(Parser, Debug)]
#[command(name = "gibbs-surfaces", version, about = "Gradient Gibbs surfaces: sampling, tilings, feasibility, surface tension")]
struct Cli {
    /// TOML experiment file; command-line values override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for data files and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Heat-bath samples on a region or a slope-constrained torus.
    Sample(SampleArgs),
    /// Exact samples by coupling from the past.
    Cftp(CftpArgs),
    /// Count or sample domino tilings.
    Tile(TileArgs),
    /// Slope polytope, torus feasibility and boundary extensions.
    Feasibility(FeasibilityArgs),
    /// Surface tension estimates and convexity margins.
    Sigma(SigmaArgs),
    /// Cluster-swap coupling experiments.
    Swap(SwapArgs),
    /// Run the exact-oracle check battery.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleArgs {
    /// Preset name or potential file.
    #[arg(long)]
    potential: Option<String>,
    /// Region of `WxH` vertices with fixed outer ring.
    #[arg(long)]
    region: Option<String>,
    /// Height on the outer ring of the region.
    #[arg(long)]
    boundary: Option<i64>,
    /// Side of a slope-constrained torus (instead of a region).
    #[arg(long)]
    torus: Option<usize>,
    #[arg(long)]
    slope: Option<String>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = kebab::<SiteOrder>)]
    order: Option<SiteOrder>,
    /// Distances for a variance profile (torus only), e.g. `1,2,4,8,16`.
    #[arg(long, value_delimiter = ',')]
    profile: Option<Vec<usize>>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CftpArgs {
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    boundary: Option<i64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<u64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TileArgs {
    /// `WxH` squares, or a file picturing the region with `#`.
    #[arg(long)]
    region: Option<String>,
    /// Print the number of tilings.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<bool>,
    /// Number of uniform samples to draw.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FeasibilityArgs {
    #[arg(long)]
    potential: Option<String>,
    /// Emit the allowed slope polytope.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    polytope: Option<bool>,
    /// Torus side for a slope feasibility test.
    #[arg(long)]
    torus: Option<usize>,
    #[arg(long)]
    slope: Option<String>,
    /// Region of `WxH` vertices whose outer ring is pinned to `boundary`.
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    boundary: Option<i64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SigmaArgs {
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Slopes separated by `;`, e.g. `1/4,0;0,0`.
    #[arg(long)]
    slopes: Option<String>,
    /// Segment endpoints `u1;u2`: also estimates the midpoint and the convexity margin.
    #[arg(long)]
    segment: Option<String>,
    #[arg(long, value_parser = kebab::<SigmaMethod>)]
    method: Option<SigmaMethod>,
    /// Truncate the potential to `|η| ≤ cutoff` first.
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    max_states: Option<u64>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long, value_parser = kebab::<Quadrature>)]
    quadrature: Option<Quadrature>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SwapArgs {
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    boundary: Option<i64>,
    /// Boundary shift of the second surface.
    #[arg(long)]
    shift: Option<i64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifyArgs {}

type CmdResult = Result<(), Error>;

/// Enum values by their serialized names, e.g. `random-scan`.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(json!(s)).map_err(|e| e.to_string())
}

/// Output sink: stdout summary plus files under `--out`.
struct Run {
    command: &'static str,
    seed: u64,
    out: Option<PathBuf>,
    threads: usize,
    params: Value,
    files: Vec<String>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> CmdResult {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).map_err(io_err)?;
            fs::write(dir.join(name), contents).map_err(io_err)?;
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> CmdResult {
        self.write(name, &(serde_json::to_string_pretty(value).expect("json") + "\n"))
    }

    fn finish(mut self, potential: Option<&PeriodicPotential>) -> CmdResult {
        if self.out.is_none() {
            return Ok(());
        }
        let canonical = serde_json::to_string(&json!({"command": self.command, "seed": self.seed, "params": self.params})).expect("json");
        let manifest = json!({
            "command": self.command,
            "seed": self.seed,
            "threads": self.threads,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": hex::encode(Sha256::digest(canonical.as_bytes())),
            "potential_hash": potential.map(|p| p.digest()),
            "params": self.params,
            "files": self.files,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

/// Command-line values over the config file's `[command]` table.
fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Option<&toml::Table>, section: &str) -> Result<T, Error> {
    let mut base = match file.and_then(|t| t.get(section)) {
        Some(v) => serde_json::to_value(v).map_err(|e| Error::ConfigParse(e.to_string()))?,
        None => json!({}),
    };
    if !base.is_object() {
        return Err(Error::ConfigParse(format!("[{section}] must be a table")));
    }
    let over = serde_json::to_value(cli).expect("args serialize");
    for (k, v) in over.as_object().expect("object") {
        if !v.is_null() {
            base[k] = v.clone();
        }
    }
    serde_json::from_value(base).map_err(|e| Error::ConfigParse(format!("[{section}]: {e}")))
}

fn potential(spec: &str, file: Option<&toml::Table>) -> Result<PeriodicPotential, Error> {
    // an inline `[potential]` table in the config file wins over a preset name
    let pot = match file.and_then(|t| t.get("potential")) {
        Some(toml::Value::Table(t)) if spec == "inline" => PeriodicPotential::from_table(t.clone())?,
        _ => PeriodicPotential::from_spec(spec)?,
    };
    let report = pot.validate_sap();
    if !report.valid() {
        return Err(Error::ConfigParse(format!("potential is not simply attractive: {report:?}")));
    }
    Ok(pot)
}

fn default_potential(file: Option<&toml::Table>, fallback: &str) -> String {
    match file.and_then(|t| t.get("potential")) {
        Some(toml::Value::String(s)) => s.clone(),
        Some(toml::Value::Table(_)) => "inline".into(),
        _ => fallback.into(),
    }
}

fn ring_region(dims: &str, height: i64) -> Result<(Arc<Graph>, Boundary<i64>), Error> {
    let (w, h) = parse_dims(dims)?;
    let graph = Graph::rectangle(w, h);
    let boundary = graph
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.x == 0 || s.y == 0 || s.x == w as i64 - 1 || s.y == h as i64 - 1)
        .map(|(v, _)| (v, height))
        .collect();
    Ok((Arc::new(graph), boundary))
}

fn samples_csv<H: Height>(samples: &[HeightConfig<H>]) -> String {
    let mut out = String::from("sample,x,y,height\n");
    for (k, c) in samples.iter().enumerate() {
        for (s, h) in c.graph().sites().iter().zip(c.values()) {
            let _ = writeln!(out, "{k},{},{},{}", s.x, s.y, h.to_f64());
        }
    }
    out
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn sample_cmd<H: Height>(run: &mut Run, pot: &PeriodicPotential, a: &SampleArgs) -> CmdResult {
    let rng = RngStream::new(run.seed, 0);
    let sweeps = a.sweeps.expect("resolved");
    let order = a.order.expect("resolved");
    let count = a.samples.expect("resolved");
    let shared = Arc::new(pot.clone());
    let samples: Vec<HeightConfig<H>> = if let Some(n) = a.torus {
        let u = feasibility::parse_slope(a.slope.as_deref().expect("resolved"))?;
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mut chain = TorusChain::<H>::new(shared.clone(), n, &u, rng.substream(k as u64))?;
                chain.advance(sweeps)?;
                Ok(chain.config)
            })
            .collect::<Result<_, Error>>()?
    } else {
        let (graph, boundary) = ring_region(a.region.as_deref().expect("resolved"), a.boundary.expect("resolved"))?;
        let typed: Boundary<H> = boundary.iter().map(|(&v, &h)| (v, H::from_f64(h as f64))).collect();
        let init = match feasibility::extend_boundary::<H>(pot, &graph, &typed) {
            Ok(c) => c,
            Err(Error::NotLipschitz) => {
                HeightConfig::from_fn(graph.clone(), |_| H::from_f64(a.boundary.expect("resolved") as f64))
            }
            Err(e) => return Err(e),
        };
        let dynamics = HeatBath::new(shared.clone(), graph.clone(), boundary.keys().copied()).with_order(order);
        (0..count)
            .into_par_iter()
            .map(|k| {
                let mut c = init.clone();
                dynamics.run(&mut c, &rng.substream(k as u64), 0, sweeps)?;
                Ok(c)
            })
            .collect::<Result<_, Error>>()?
    };
    run.write("samples.csv", &samples_csv(&samples))?;
    let meta = json!({"seed": run.seed, "stream": 0, "sweeps": sweeps, "samples": count, "potential_hash": pot.digest()});
    run.write_json("samples.json", &meta)?;
    println!("{count} samples after {sweeps} sweeps");
    if let (Some(dist), Some(_)) = (&a.profile, a.torus) {
        let profile = observables::variance_profile_from_samples(&samples, pot.period(), dist, 32.min(count.max(2)))?;
        let mut csv = String::from("j,variance,stderr,within_bound\n");
        for i in 0..dist.len() {
            let _ = writeln!(csv, "{},{},{},{}", dist[i], profile.variances[i], profile.stderrs[i], profile.within_bound[i]);
        }
        run.write("profile.csv", &csv)?;
        let record = json!({"observable": "variance_profile", "inputs": run.params, "value": profile, "stderr": profile.stderrs, "method": "heat-bath", "seed": run.seed});
        run.write_json("profile.json", &record)?;
        println!("variance profile {:?}, C = {}, verdict {:?}", profile.variances, profile.c_hat, profile.verdict);
    }
    Ok(())
}

fn cftp_cmd(run: &mut Run, pot: &PeriodicPotential, a: &CftpArgs) -> CmdResult {
    let rng = RngStream::new(run.seed, 0);
    let (graph, boundary) = ring_region(a.region.as_deref().expect("resolved"), a.boundary.expect("resolved"))?;
    let opts = CftpOptions { max_sweeps: a.max_sweeps.expect("resolved") };
    let outcomes = (0..a.samples.expect("resolved"))
        .into_par_iter()
        .map(|k| cftp_sample(pot, &graph, &boundary, &rng.substream(k as u64), opts))
        .collect::<Result<Vec<_>, Error>>()?;
    let configs: Vec<HeightConfig<i64>> = outcomes.iter().map(|o| o.config.clone()).collect();
    run.write("samples.csv", &samples_csv(&configs))?;
    let sweeps: Vec<u64> = outcomes.iter().map(|o| o.sweeps).collect();
    run.write_json("cftp.json", &json!({"seed": run.seed, "coalescence_sweeps": sweeps, "potential_hash": pot.digest()}))?;
    println!("{} exact samples; coalescence sweeps {:?}", outcomes.len(), sweeps);
    Ok(())
}

fn region_arg(text: &str) -> Result<SquareRegion, Error> {
    if parse_dims(text).is_ok() {
        return SquareRegion::parse(text);
    }
    let picture = fs::read_to_string(text).map_err(|e| Error::ConfigParse(format!("region {text:?}: {e}")))?;
    SquareRegion::from_ascii(&picture)
}

fn tile_cmd(run: &mut Run, a: &TileArgs) -> CmdResult {
    let region = region_arg(a.region.as_deref().expect("resolved"))?;
    if a.count == Some(true) {
        let count = tilings::count_tilings_kasteleyn(&region);
        println!("{count}");
        run.write_json("count.json", &json!({"squares": region.len(), "count": count.to_string()}))?;
    }
    let n = a.samples.expect("resolved");
    if n > 0 {
        let rng = RngStream::new(run.seed, 0);
        let samples = (0..n)
            .into_par_iter()
            .map(|k| tilings::uniform_tiling_sample(&region, &rng.substream(k as u64)))
            .collect::<Result<Vec<_>, Error>>()?;
        let mut dominoes = String::from("sample,x1,y1,x2,y2\n");
        let mut heights = Vec::new();
        for (k, t) in samples.iter().enumerate() {
            for (p, q) in t.dominoes() {
                let _ = writeln!(dominoes, "{k},{},{},{},{}", p.x, p.y, q.x, q.y);
            }
            heights.push(tilings::matching_to_height(t)?);
        }
        run.write("tilings.csv", &dominoes)?;
        run.write("heights.csv", &samples_csv(&heights))?;
        println!("{n} uniform tilings of {} squares", region.len());
    }
    Ok(())
}

fn feasibility_cmd(run: &mut Run, pot: &PeriodicPotential, a: &FeasibilityArgs) -> CmdResult {
    let mut summary = serde_json::Map::new();
    if a.polytope == Some(true) {
        let poly = feasibility::allowed_slope_polytope(pot, feasibility::default_cycle_bound(pot));
        run.write("polytope.csv", &poly.to_csv())?;
        let facets: Vec<String> = poly.reduced_facets().iter().map(|(n, c)| format!("{}*u1 + {}*u2 <= {c}", n[0], n[1])).collect();
        for f in &facets {
            println!("{f}");
        }
        summary.insert("facets".into(), json!(facets));
    }
    if let Some(n) = a.torus {
        let u = feasibility::parse_slope(a.slope.as_deref().expect("resolved"))?;
        let g = feasibility::slope_torus(pot, n, &u)?;
        let fg = FeasibilityGraph::from_graph(pot, &g);
        match fg.negative_cycle() {
            None => {
                println!("slope feasible on the {n}-torus");
                summary.insert("torus_feasible".into(), json!(true));
            }
            Some((cycle, weight)) => {
                let sites: Vec<[i64; 2]> = cycle.iter().map(|&v| [g.site(v).x, g.site(v).y]).collect();
                println!("slope infeasible on the {n}-torus: negative cycle of weight {weight}");
                summary.insert("torus_feasible".into(), json!(false));
                summary.insert("negative_cycle".into(), json!({"sites": sites, "weight": weight}));
            }
        }
    }
    if let Some(dims) = &a.region {
        let (graph, boundary) = ring_region(dims, a.boundary.expect("resolved"))?;
        let top = feasibility::extend_boundary::<i64>(pot, &graph, &boundary)?;
        let bottom = feasibility::extend_boundary_min::<i64>(pot, &graph, &boundary)?;
        let mut csv = String::from("x,y,min,max\n");
        for (v, s) in graph.sites().iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", s.x, s.y, bottom.get(v), top.get(v));
        }
        run.write("extensions.csv", &csv)?;
        println!("extensions of {dims} written");
    }
    run.write_json("feasibility.json", &Value::Object(summary))
}

fn sigma_cmd(run: &mut Run, pot: &PeriodicPotential, a: &SigmaArgs) -> CmdResult {
    let pot = match a.cutoff {
        Some(c) => pot.lipschitz_truncate(c)?,
        None => pot.clone(),
    };
    let n = a.n.expect("resolved");
    let method = a.method.expect("resolved");
    let mut opts = SigmaOptions { max_states: a.max_states.expect("resolved"), ..SigmaOptions::default() };
    opts.ti.sweeps = a.sweeps.expect("resolved");
    opts.ti.quadrature = a.quadrature.expect("resolved");
    opts.ti.tolerance = a.tolerance;
    let rng = RngStream::new(run.seed, 0);
    let parse_list = |s: &str| s.split(';').map(|t| feasibility::parse_slope(t.trim())).collect::<Result<Vec<_>, Error>>();
    let mut records = Vec::new();
    let estimate = |u: &feasibility::Slope| observables::sigma_estimate(&pot, u, n, method, &opts, &rng);
    let record = |e: &observables::SigmaEstimate, inputs: Value| {
        json!({"observable": "sigma", "inputs": inputs, "value": e.value, "stderr": e.stderr, "method": e.method, "seed": run.seed, "log_z": e.log_z})
    };
    if let Some(list) = &a.slopes {
        for u in parse_list(list)? {
            let e = estimate(&u)?;
            println!("sigma({}, {}) = {} ± {}", u[0], u[1], e.value, e.stderr);
            records.push(record(&e, json!({"slope": [u[0].to_string(), u[1].to_string()], "n": n, "class": e.class})));
        }
    }
    if let Some(seg) = &a.segment {
        let ends = parse_list(seg)?;
        if ends.len() != 2 {
            return Err(Error::ConfigParse("segment needs exactly two slopes".into()));
        }
        let two = num_rational::Rational64::from_integer(2);
        let mid = [(ends[0][0] + ends[1][0]) / two, (ends[0][1] + ends[1][1]) / two];
        let (e1, e2, em) = (estimate(&ends[0])?, estimate(&ends[1])?, estimate(&mid)?);
        let rep = observables::convexity_margin(&e1, &e2, &em)?;
        println!("convexity margin {} ± {}: {:?}", rep.margin, rep.stderr, rep.verdict);
        records.push(json!({"observable": "convexity_margin", "inputs": {"segment": seg, "n": n}, "value": rep.margin, "stderr": rep.stderr, "method": method, "seed": run.seed, "verdict": rep.verdict}));
    }
    run.write_json("sigma.json", &Value::Array(records))
}

fn swap_cmd(run: &mut Run, pot: &PeriodicPotential, a: &SwapArgs) -> CmdResult {
    let rng = RngStream::new(run.seed, 0);
    let shift = a.shift.expect("resolved");
    let (graph, b1) = ring_region(a.region.as_deref().expect("resolved"), a.boundary.expect("resolved"))?;
    let b2: Boundary<i64> = b1.iter().map(|(&v, &h)| (v, h + shift)).collect();
    let window: Vec<bool> = (0..graph.len()).map(|v| !b1.contains_key(&v)).collect();
    let trials = a.trials.expect("resolved");
    let results = (0..trials)
        .into_par_iter()
        .map(|k| {
            let k = k as u64;
            let p1 = cftp_sample(pot, &graph, &b1, &rng.substream(3 * k), CftpOptions::default())?.config;
            let p2 = cftp_sample(pot, &graph, &b2, &rng.substream(3 * k + 1), CftpOptions::default())?.config;
            let mut r = rng.substream(3 * k + 2);
            let tr = Triplet::with_fresh_residuals(p1.clone(), p2.clone(), &mut r.clone())?;
            let bounds = offset_bounds(pot, &tr, &window);
            let (q1, q2) = synchronize_clusters(pot, p1, p2, &window, &mut r)?;
            Ok((q1.le(&q2), bounds.b_plus, bounds.b_minus, tr))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let violations = results.iter().filter(|r| !r.0).count();
    let mut csv = String::from("trial,b_plus,b_minus\n");
    for (k, r) in results.iter().enumerate() {
        let _ = writeln!(csv, "{k},{},{}", r.1, r.2);
    }
    run.write("offset_bounds.csv", &csv)?;
    if let Some(last) = results.last() {
        run.write("clusters.csv", &swappable_set(pot, &last.3, &window).to_csv(&graph))?;
    }
    run.write_json("swap.json", &json!({"trials": trials, "shift": shift, "order_violations": violations, "seed": run.seed}))?;
    println!("{violations} order violations in {trials} synchronized couplings");
    Ok(())
}

fn execute(cli: Cli) -> CmdResult {
    let file: Option<toml::Table> = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::ConfigParse(format!("{}: {e}", p.display())))?;
            Some(toml::from_str(&text).map_err(|e| Error::ConfigParse(e.to_string()))?)
        }
        None => None,
    };
    let f = file.as_ref();
    let from_file = |k: &str| f.and_then(|t| t.get(k));
    let seed = match (cli.seed, from_file("seed")) {
        (Some(s), _) => s,
        (None, Some(v)) => v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| Error::ConfigParse("seed must be a nonnegative integer".into()))?,
        (None, None) => 0,
    };
    let out = cli.out.clone().or_else(|| from_file("out").and_then(|v| v.as_str()).map(PathBuf::from));
    let pool = pool(cli.threads)?;
    let mut run = Run { command: "", seed, out, threads: cli.threads, params: Value::Null, files: Vec::new() };
    pool.install(|| match &cli.command {
        Command::Sample(args) => {
            let mut a = merge(args, f, "sample")?;
            a.potential.get_or_insert_with(|| default_potential(f, "sos-abs"));
            if a.torus.is_none() {
                a.region.get_or_insert_with(|| "6x6".into());
                a.boundary.get_or_insert(0);
            } else {
                a.slope.get_or_insert_with(|| "0,0".into());
            }
            a.sweeps.get_or_insert(1000);
            a.samples.get_or_insert(1);
            a.order.get_or_insert(SiteOrder::Checkerboard);
            let pot = potential(a.potential.as_deref().expect("set"), f)?;
            run.command = "sample";
            run.params = serde_json::to_value(&a).expect("json");
            if pot.is_discrete() {
                sample_cmd::<i64>(&mut run, &pot, &a)?;
            } else {
                sample_cmd::<f64>(&mut run, &pot, &a)?;
            }
            run.finish(Some(&pot))
        }
        Command::Cftp(args) => {
            let mut a = merge(args, f, "cftp")?;
            a.potential.get_or_insert_with(|| default_potential(f, "domino"));
            a.region.get_or_insert_with(|| "5x5".into());
            a.boundary.get_or_insert(0);
            a.samples.get_or_insert(1);
            a.max_sweeps.get_or_insert(CftpOptions::default().max_sweeps);
            let pot = potential(a.potential.as_deref().expect("set"), f)?;
            run.command = "cftp";
            run.params = serde_json::to_value(&a).expect("json");
            cftp_cmd(&mut run, &pot, &a)?;
            run.finish(Some(&pot))
        }
        Command::Tile(args) => {
            let mut a = merge(args, f, "tile")?;
            a.region.get_or_insert_with(|| "4x4".into());
            a.samples.get_or_insert(0);
            run.command = "tile";
            run.params = serde_json::to_value(&a).expect("json");
            tile_cmd(&mut run, &a)?;
            run.finish(None)
        }
        Command::Feasibility(args) => {
            let mut a = merge(args, f, "feasibility")?;
            a.potential.get_or_insert_with(|| default_potential(f, "domino"));
            if a.torus.is_some() {
                a.slope.get_or_insert_with(|| "0,0".into());
            }
            if a.region.is_some() {
                a.boundary.get_or_insert(0);
            }
            if a.torus.is_none() && a.region.is_none() {
                a.polytope.get_or_insert(true);
            }
            let pot = potential(a.potential.as_deref().expect("set"), f)?;
            run.command = "feasibility";
            run.params = serde_json::to_value(&a).expect("json");
            feasibility_cmd(&mut run, &pot, &a)?;
            run.finish(Some(&pot))
        }
        Command::Sigma(args) => {
            let mut a = merge(args, f, "sigma")?;
            a.potential.get_or_insert_with(|| default_potential(f, "domino"));
            a.n.get_or_insert(4);
            if a.segment.is_none() {
                a.slopes.get_or_insert_with(|| "0,0".into());
            }
            a.method.get_or_insert(SigmaMethod::TransferMatrix);
            a.max_states.get_or_insert(SigmaOptions::default().max_states);
            a.sweeps.get_or_insert(SigmaOptions::default().ti.sweeps);
            a.quadrature.get_or_insert(Quadrature::default());
            let pot = potential(a.potential.as_deref().expect("set"), f)?;
            run.command = "sigma";
            run.params = serde_json::to_value(&a).expect("json");
            sigma_cmd(&mut run, &pot, &a)?;
            run.finish(Some(&pot))
        }
        Command::Swap(args) => {
            let mut a = merge(args, f, "swap")?;
            a.potential.get_or_insert_with(|| default_potential(f, "tabulated:-1:1,0,1"));
            a.region.get_or_insert_with(|| "4x4".into());
            a.boundary.get_or_insert(0);
            a.shift.get_or_insert(1);
            a.trials.get_or_insert(100);
            let pot = potential(a.potential.as_deref().expect("set"), f)?;
            run.command = "swap";
            run.params = serde_json::to_value(&a).expect("json");
            swap_cmd(&mut run, &pot, &a)?;
            run.finish(Some(&pot))
        }
        Command::Verify(args) => {
            let _ = merge(args, f, "verify")?;
            run.command = "verify";
            run.params = json!({});
            let report = verify::run_battery(seed);
            let text = report.to_text();
            print!("{text}");
            run.write("verify.txt", &text)?;
            run.write_json("verify.json", &serde_json::to_value(&report).expect("json"))?;
            let passed = report.all_passed();
            run.finish(None)?;
            if !passed {
                std::process::exit(1);
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string().trim_end()}));
            ExitCode::FAILURE
        }
    }
}
