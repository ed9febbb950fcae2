use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use linregions::bounds::{
    arora_lower, maxout_upper, montufar2014_lower, montufar2017_upper, naive_upper, relu_upper, zigzag_lower, BigCount,
};
use linregions::constructions::{deep_1d, multi_dim, zigzag_layer};
use linregions::counter::{
    count_regions_maxout, dimension_profile, export_milp, CounterOptions, DEFAULT_EPSILON, DEFAULT_REGION_CAP,
};
use linregions::network::{read_network, write_network, InputDomain, Network};
use linregions::render::render_svg;
use linregions::verify::{run_suite, Suite};
use linregions::{Error, NetConfig};

const USER_ERROR: u8 = 1;
const INTERNAL_ERROR: u8 = 2;
const GUARD_HIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "linregions",
    version,
    about = "Bounds, constructions and exact counts of linear regions"
)]
struct Cli {
    /// Print a machine-readable JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every applicable bound on the number of regions.
    Bounds(BoundsArgs),
    /// Count the regions of a network file exactly.
    Count(CountArgs),
    /// Write a network with a known number of regions.
    #[command(subcommand)]
    Construct(ConstructKind),
    /// Write the mixed-integer model whose solutions are the regions.
    ExportMilp(ExportArgs),
    /// Draw the regions of a two-input network as SVG.
    Render(RenderArgs),
    /// Run the built-in self-check suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n0: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    widths: Vec<usize>,
    /// Width of the output layer.
    #[arg(long)]
    output: Option<usize>,
    /// Treat the output layer as one more rectified layer.
    #[arg(long)]
    include_output_layer: bool,
    /// Per-layer caps on the weight-matrix ranks.
    #[arg(long, value_delimiter = ',')]
    rank_caps: Option<Vec<usize>>,
    /// Rank of maxout units, enabling the maxout bound.
    #[arg(long)]
    maxout_rank: Option<usize>,
}

#[derive(Args)]
#[group(id = "domain", multiple = false)]
struct DomainArgs {
    /// Uniform box `lo,hi` in every coordinate (default `0,1`).
    #[arg(long = "box", value_name = "LO,HI", allow_hyphen_values = true)]
    bbox: Option<String>,
    /// JSON file `{"lower": [...], "upper": [...]}`.
    #[arg(long)]
    bounds_file: Option<PathBuf>,
    /// Count over the whole input space.
    #[arg(long)]
    unrestricted: bool,
}

#[derive(Args)]
struct SearchArgs {
    /// Strict-activation threshold.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct CountArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Stop after this many regions (exit code 3).
    #[arg(long, default_value_t = DEFAULT_REGION_CAP)]
    cap: u64,
    /// Report the activation pattern and an interior point of every region.
    #[arg(long)]
    witnesses: bool,
    /// Re-check every n-th feasibility verdict in exact arithmetic.
    #[arg(long, value_name = "N")]
    certify: Option<u64>,
    /// Histogram of region image dimensions (implies witnesses internally).
    #[arg(long)]
    profile: bool,
}

#[derive(Subcommand)]
enum ConstructKind {
    /// One layer of n units with n + 1 regions on [0, 1].
    Zigzag {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One input, stacked zigzag layers, product of (n_l + 1) regions.
    Deep1d {
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Several inputs, zigzag blocks then a generic last layer.
    Multidim {
        #[arg(long)]
        n0: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ExportArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArgs,
    #[arg(long)]
    out: PathBuf,
    /// Print the big-M constants of every unit.
    #[arg(long)]
    big_m_report: bool,
}

#[derive(Args)]
struct RenderArgs {
    network: PathBuf,
    #[command(flatten)]
    domain: DomainArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suites to run (bounds, oracle, constructions); all when omitted.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Random networks compared by the oracle suite.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Self {
        Failure {
            code: USER_ERROR,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SizeGuard(_) => GUARD_HIT,
            Error::Numerical(_) => INTERNAL_ERROR,
            _ => USER_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// What a command prints: a JSON document, its human rendering, and the exit
/// code. A nonzero code here still prints the report.
struct Outcome {
    doc: Value,
    text: String,
    code: u8,
}

impl Outcome {
    fn ok(doc: Value, text: String) -> Self {
        Outcome { doc, text, code: 0 }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USER_ERROR } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Count(a) => cmd_count(a),
        Command::Construct(k) => cmd_construct(k),
        Command::ExportMilp(a) => cmd_export(a),
        Command::Render(a) => cmd_render(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", out.doc);
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.code)
        }
        Err(f) => {
            if cli.json {
                println!("{}", json!({"error": f.message, "exit_code": f.code}));
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Counts fit in JSON numbers up to `u64`; larger ones become decimal strings.
fn count_json(c: &BigCount) -> Value {
    u64::try_from(c)
        .map(Value::from)
        .unwrap_or_else(|_| Value::from(c.to_string()))
}

fn cmd_bounds(a: BoundsArgs) -> Result<Outcome, Failure> {
    let mut widths = a.widths.clone();
    match (a.output, a.include_output_layer) {
        (Some(o), true) => widths.push(o),
        (None, true) => return Err(Failure::user("--include-output-layer needs --output")),
        _ => {}
    }
    let mut config = NetConfig::new(a.n0, widths.clone());
    if let Some(caps) = &a.rank_caps {
        config = config.with_rank_caps(caps.clone());
    }
    config.validate()?;

    let mut rows: Vec<(&str, BigCount)> = vec![
        ("improved_upper", relu_upper(&config)?),
        (
            "montufar2017_upper",
            montufar2017_upper(&NetConfig::new(a.n0, widths.clone()))?,
        ),
        ("naive_upper", naive_upper(&config)),
    ];
    let plain = NetConfig::new(a.n0, widths.clone());
    if let Ok(v) = zigzag_lower(&plain) {
        rows.push(("replicated_zigzag_lower", v));
    }
    if let Ok(v) = montufar2014_lower(&plain) {
        rows.push(("montufar2014_lower", v));
    }
    // first layer 2m, then equal layers of width w ≥ 2
    let tail_uniform = widths.len() == 1 || widths[1..].iter().all(|&w| w == widths[1] && w >= 2);
    if widths[0].is_multiple_of(2) && tail_uniform {
        let w = widths.get(1).copied().unwrap_or(2);
        if let Ok(v) = arora_lower(a.n0, widths[0] / 2, w, widths.len()) {
            rows.push(("arora_lower", v));
        }
    }
    if let Some(k) = a.maxout_rank {
        rows.push(("maxout_upper", maxout_upper(&plain.clone().with_maxout_rank(k))?));
    }

    let mut text = format!("n0 = {}, widths = {:?}\n", a.n0, widths);
    let pad = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        text.push_str(&format!("{k:<pad$}  {v}\n"));
    }
    let bounds: serde_json::Map<String, Value> = rows.iter().map(|(k, v)| (k.to_string(), count_json(v))).collect();
    let doc = json!({"n0": a.n0, "widths": widths, "bounds": bounds});
    Ok(Outcome::ok(doc, text))
}

fn parse_box(text: &str, dim: usize) -> Result<InputDomain, Failure> {
    let parts: Vec<&str> = text.split(',').collect();
    let [lo, hi] = parts[..] else {
        return Err(Failure::user(format!("--box expects lo,hi, got {text:?}")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Failure::user(format!("bad box bound {s:?}")))
    };
    Ok(InputDomain::uniform(dim, num(lo)?, num(hi)?))
}

fn read_bounds_file(path: &Path) -> Result<InputDomain, Failure> {
    #[derive(serde::Deserialize)]
    struct BoxFile {
        lower: Vec<f64>,
        upper: Vec<f64>,
    }
    let text = fs::read_to_string(path).map_err(|e| Failure::user(format!("{}: {e}", path.display())))?;
    let b: BoxFile = serde_json::from_str(&text).map_err(|e| Failure::user(format!("{}: {e}", path.display())))?;
    Ok(InputDomain::Box {
        lower: b.lower,
        upper: b.upper,
    })
}

fn domain_for(args: &DomainArgs, net: &Network) -> Result<InputDomain, Failure> {
    let domain = if args.unrestricted {
        InputDomain::Unrestricted
    } else if let Some(path) = &args.bounds_file {
        read_bounds_file(path)?
    } else {
        parse_box(args.bbox.as_deref().unwrap_or("0,1"), net.input_dim)?
    };
    domain.check(net.input_dim)?;
    Ok(domain)
}

fn search_options(domain: InputDomain, s: &SearchArgs) -> CounterOptions {
    CounterOptions::new(domain)
        .with_epsilon(s.epsilon)
        .with_workers(s.workers)
}

fn cmd_count(a: CountArgs) -> Result<Outcome, Failure> {
    let net = read_network(&a.network)?;
    let domain = domain_for(&a.domain, &net)?;
    let mut opts = search_options(domain, &a.search).with_cap(Some(a.cap));
    if a.witnesses || a.profile {
        opts = opts.with_witnesses();
    }
    if let Some(n) = a.certify {
        opts = opts.with_certification(n);
    }
    let result = count_regions_maxout(&net, &opts)?;
    let profile = if a.profile {
        Some(dimension_profile(&result, &net)?)
    } else {
        None
    };

    let mut doc = result.to_json();
    if !a.witnesses {
        if let Some(m) = doc.as_object_mut() {
            m.remove("witnesses");
        }
    }
    if let Some(p) = &profile {
        doc["dimension_profile"] = p.iter().map(|(d, n)| (d.to_string(), Value::from(*n))).collect();
    }

    let mut text = format!("regions: {}", result.count);
    if result.capped {
        text.push_str(" (cap reached; lower bound)");
    }
    text.push_str(&format!(
        "\nnodes: {}\npruned: {}\nseconds: {:.3}\n",
        result.nodes, result.pruned, result.seconds
    ));
    if let Some(c) = &result.certification {
        text.push_str(&format!(
            "certified: {} checked, {} disagreements\n",
            c.checked, c.disagreements
        ));
    }
    if let Some(p) = &profile {
        for (d, n) in p {
            text.push_str(&format!("dimension {d}: {n}\n"));
        }
    }
    if a.witnesses {
        for w in result.witnesses.iter().flatten() {
            text.push_str(&format!("{}  {:?}\n", w.pattern, w.point));
        }
    }
    let code = if result.capped {
        GUARD_HIT
    } else if result.certification.is_some_and(|c| c.disagreements > 0) {
        INTERNAL_ERROR
    } else {
        0
    };
    Ok(Outcome { doc, text, code })
}

fn cmd_construct(kind: ConstructKind) -> Result<Outcome, Failure> {
    let (name, net, predicted, exact, out) = match kind {
        ConstructKind::Zigzag { n, out } => {
            let net = zigzag_layer(n)?.network();
            ("zigzag", net, BigCount::from(n + 1), true, out)
        }
        ConstructKind::Deep1d { widths, out } => {
            let net = deep_1d(&widths)?;
            let product = widths.iter().map(|&n| BigCount::from(n + 1)).product();
            ("deep1d", net, product, true, out)
        }
        ConstructKind::Multidim { n0, widths, seed, out } => {
            let net = multi_dim(n0, &widths, seed)?;
            let lower = zigzag_lower(&NetConfig::new(n0, widths))?;
            ("multidim", net, lower, false, out)
        }
    };
    write_network(&net, &out)?;
    let relation = if exact { "=" } else { ">=" };
    let text = format!(
        "wrote {} ({} inputs, widths {:?})\npredicted regions on the unit cube {relation} {predicted}\n",
        out.display(),
        net.input_dim,
        net.widths()
    );
    let doc = json!({
        "kind": name,
        "path": out.display().to_string(),
        "input_dim": net.input_dim,
        "widths": net.widths(),
        "predicted": count_json(&predicted),
        "exact": exact,
    });
    Ok(Outcome::ok(doc, text))
}

fn cmd_export(a: ExportArgs) -> Result<Outcome, Failure> {
    let net = read_network(&a.network)?;
    let domain = domain_for(&a.domain, &net)?;
    let model = export_milp(&net, &CounterOptions::new(domain))?;
    fs::write(&a.out, model.to_lp_string()).map_err(|e| Failure::user(format!("{}: {e}", a.out.display())))?;

    let mut text = format!(
        "wrote {}: {} constraints, {} binaries\n",
        a.out.display(),
        model.rows.len(),
        model.binaries.len()
    );
    let mut doc = json!({
        "path": a.out.display().to_string(),
        "constraints": model.rows.len(),
        "binaries": model.binaries,
    });
    if a.big_m_report {
        let mut report = Vec::new();
        for (l, layer) in model.big_m.iter().enumerate() {
            for (i, b) in layer.iter().enumerate() {
                text.push_str(&format!(
                    "layer {} unit {}: H = {}, H_bar = {}\n",
                    l + 1,
                    i + 1,
                    b.h,
                    b.h_bar
                ));
                report.push(json!({"layer": l + 1, "unit": i + 1, "h": b.h, "h_bar": b.h_bar}));
            }
        }
        doc["big_m"] = Value::from(report);
    }
    Ok(Outcome::ok(doc, text))
}

fn cmd_render(a: RenderArgs) -> Result<Outcome, Failure> {
    let net = read_network(&a.network)?;
    let domain = domain_for(&a.domain, &net)?;
    let (polygons, svg) = render_svg(&net, &search_options(domain, &a.search))?;
    fs::write(&a.out, svg).map_err(|e| Failure::user(format!("{}: {e}", a.out.display())))?;
    let text = format!("wrote {} with {} regions\n", a.out.display(), polygons.len());
    let doc = json!({"path": a.out.display().to_string(), "polygons": polygons.len()});
    Ok(Outcome::ok(doc, text))
}

fn cmd_verify(a: VerifyArgs) -> Result<Outcome, Failure> {
    let suites: Vec<Suite> = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites.iter().map(|s| s.parse()).collect::<Result<_, Error>>()?
    };
    let reports: Vec<_> = suites.into_iter().map(|s| run_suite(s, a.seeds)).collect();
    let passed = reports.iter().all(|r| r.passed());
    let text: String = reports.iter().map(|r| r.to_string()).collect();
    let doc = json!({
        "passed": passed,
        "suites": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        doc,
        text,
        code: if passed { 0 } else { INTERNAL_ERROR },
    })
}
