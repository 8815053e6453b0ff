//! Command-line front end: evaluate instances, search protocol
//! families, scan for star-plus-path counterexamples, sweep the star
//! asymptotics, query the Markov stay bound, exercise the lazy-walk
//! bound, and run the verification checks.
//!
//! All randomness flows from `--seed`; identical arguments produce
//! byte-identical output. Exit codes: 0 success, 1 a verification check
//! failed, 2 usage errors, 3 precondition or input violations.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nicd_core::cube::{BooleanFunction, CorrelationParam};
use nicd_core::gauss;
use nicd_core::markov::{
    ChainFile, StayQuery, aks_bound, equality_case_check, stay_probability_exact,
};
use nicd_core::rng::Rng;
use nicd_core::tree::{
    InstanceFile, NicdInstance, Protocol, ProtocolFamily, best_simple_protocol,
    counterexample_search, path_closed_form, success_probability,
};
use nicd_core::verify;

#[derive(Parser)]
#[command(name = "nicd", version, about = "NICD-on-trees laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format for report-style results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker-thread bound for the searches.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the protocol stored in an instance file.
    Eval {
        /// Instance file (JSON: n, rho, edges, players, protocol).
        #[arg(long)]
        input: PathBuf,
    },
    /// Find the best simple protocol over a candidate family.
    Search {
        #[arg(long)]
        input: PathBuf,
        /// One of: all-balanced, monotone-balanced, or a comma-separated
        /// list of function encodings.
        #[arg(long, default_value = "all-balanced")]
        family: String,
    },
    /// Scan star-plus-path instances for mixed-beats-simple hits.
    Counterexample {
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        k1_max: usize,
        #[arg(long, default_value_t = 200)]
        k2_max: usize,
    },
    /// Star majority asymptotics: limit value, lower estimate, slope.
    StarAsym {
        #[arg(long)]
        rho: f64,
        /// Single player count; omit to sweep a grid.
        #[arg(long)]
        k: Option<u64>,
        #[arg(long, default_value_t = 100)]
        k_min: u64,
        #[arg(long, default_value_t = 10_000)]
        k_max: u64,
        #[arg(long, default_value_t = 12)]
        points: usize,
    },
    /// Exact stay probability versus the spectral-gap bound.
    MarkovBound {
        /// Chain file (JSON: size, rows, optional pi).
        #[arg(long)]
        input: PathBuf,
        /// Pipe-separated state sets, e.g. "0,1|0|0,1" gives A_0..A_2.
        #[arg(long)]
        sets: String,
    },
    /// Lazy-walk bound on seeded random set pairs.
    Walk {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: u64,
    },
    /// Run one verification check and print its report.
    Verify {
        /// Check name, with or without the check_ prefix.
        check: String,
        #[command(flatten)]
        opts: VerifyOpts,
    },
}

#[derive(Args)]
struct VerifyOpts {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Cube dimension for the sampled-function checks.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Majority arity for the crossover check.
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 50)]
    k_max: usize,
    #[arg(long, default_value_t = 50)]
    ell_max: usize,
    /// Product length for the coefficient inequality.
    #[arg(long, default_value_t = 50)]
    terms: usize,
    /// Instance file supplying the tree for the measure check.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, String> {
    let (text, code) = match &cli.command {
        Command::Eval { input } => (eval_command(input, cli.format)?, ExitCode::SUCCESS),
        Command::Search { input, family } => (
            search_command(input, family, cli.format)?,
            ExitCode::SUCCESS,
        ),
        Command::Counterexample {
            rho,
            n,
            k1_max,
            k2_max,
        } => (
            counterexample_command(*rho, *n, *k1_max, *k2_max, cli.jobs, cli.format)?,
            ExitCode::SUCCESS,
        ),
        Command::StarAsym {
            rho,
            k,
            k_min,
            k_max,
            points,
        } => (
            star_asym_command(*rho, *k, *k_min, *k_max, *points, cli.format)?,
            ExitCode::SUCCESS,
        ),
        Command::MarkovBound { input, sets } => {
            (markov_command(input, sets, cli.format)?, ExitCode::SUCCESS)
        }
        Command::Walk {
            n,
            tau,
            seed,
            trials,
        } => (
            walk_command(*n, *tau, *seed, *trials, cli.format)?,
            ExitCode::SUCCESS,
        ),
        Command::Verify { check, opts } => {
            let report = verify_command(check, opts)?;
            let code = if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
            (
                serde_json::to_string(&report).map_err(|e| e.to_string())? + "\n",
                code,
            )
        }
    };
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| e.to_string())?,
        None => print!("{text}"),
    }
    Ok(code)
}

/// 17 significant digits, locale-free.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

struct ReportRow {
    instance: String,
    protocol: String,
    success: f64,
    bound: Option<f64>,
    note: String,
}

fn render_rows(rows: &[ReportRow], format: Format) -> String {
    match format {
        Format::Json => {
            let values: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "instance": r.instance,
                        "protocol": r.protocol,
                        "success": r.success,
                        "bound": r.bound,
                        "note": r.note,
                    })
                })
                .collect();
            serde_json::to_string_pretty(&values).expect("serializable") + "\n"
        }
        Format::Csv => {
            let mut out = String::from("instance,protocol,success,bound,note\n");
            for r in rows {
                let bound = r.bound.map(fmt).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    csv_quote(&r.instance),
                    csv_quote(&r.protocol),
                    fmt(r.success),
                    bound,
                    csv_quote(&r.note)
                );
            }
            out
        }
    }
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn load_instance(path: &PathBuf) -> Result<(NicdInstance, Option<Protocol>, String), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let file = InstanceFile::parse(&text).map_err(|e| e.to_string())?;
    let (inst, prot) = file.to_instance().map_err(|e| e.to_string())?;
    Ok((inst, prot, path.display().to_string()))
}

/// Player gaps along the path, when the tree is a path.
fn path_gaps(inst: &NicdInstance) -> Option<Vec<usize>> {
    let mut degree = vec![0usize; inst.vertex_count()];
    let mut adjacency = vec![Vec::new(); inst.vertex_count()];
    for &(u, v) in inst.edges() {
        degree[u] += 1;
        degree[v] += 1;
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    if degree.iter().any(|&d| d > 2) {
        return None;
    }
    let start = (0..inst.vertex_count()).find(|&v| degree[v] <= 1)?;
    let mut position = vec![usize::MAX; inst.vertex_count()];
    let mut previous = usize::MAX;
    let mut current = start;
    for index in 0..inst.vertex_count() {
        position[current] = index;
        let next = adjacency[current].iter().copied().find(|&v| v != previous);
        previous = current;
        match next {
            Some(v) => current = v,
            None => break,
        }
    }
    let mut places: Vec<usize> = inst.players().iter().map(|&v| position[v]).collect();
    places.sort_unstable();
    if places.len() < 2 {
        return None;
    }
    Some(places.windows(2).map(|w| w[1] - w[0]).collect())
}

fn eval_command(input: &PathBuf, format: Format) -> Result<String, String> {
    let (inst, prot, name) = load_instance(input)?;
    let prot = prot.ok_or("instance file carries no protocol to evaluate")?;
    let success = success_probability(&inst, &prot).map_err(|e| e.to_string())?;
    let encoding = prot
        .functions()
        .iter()
        .map(|(v, f)| format!("{v}:{}", f.encoding()))
        .collect::<Vec<_>>()
        .join(";");
    let (bound, note) = match path_gaps(&inst) {
        Some(gaps) => (
            Some(path_closed_form(&gaps, inst.rho())),
            "bound = path optimum (simple dictator product)".to_string(),
        ),
        None => (None, String::new()),
    };
    let note = if prot.allows_unbalanced() {
        format!("unbalanced functions allowed; {note}")
    } else {
        note
    };
    Ok(render_rows(
        &[ReportRow {
            instance: name,
            protocol: encoding,
            success,
            bound,
            note,
        }],
        format,
    ))
}

fn search_command(input: &PathBuf, family: &str, format: Format) -> Result<String, String> {
    let (inst, _, name) = load_instance(input)?;
    let family_spec = match family {
        "all-balanced" => ProtocolFamily::AllBalanced,
        "monotone-balanced" => ProtocolFamily::MonotoneBalanced,
        list => {
            let functions = list
                .split(',')
                .map(|enc| BooleanFunction::parse(inst.n(), enc.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            ProtocolFamily::Named(functions)
        }
    };
    let (best, value) = best_simple_protocol(&inst, &family_spec).map_err(|e| e.to_string())?;
    Ok(render_rows(
        &[ReportRow {
            instance: name,
            protocol: best.encoding().to_string(),
            success: value,
            bound: None,
            note: format!("best simple protocol over family {family}"),
        }],
        format,
    ))
}

fn counterexample_command(
    rho: f64,
    n: usize,
    k1_max: usize,
    k2_max: usize,
    jobs: usize,
    format: Format,
) -> Result<String, String> {
    if n < 4 {
        return Err("the mixed protocol needs n >= 4".into());
    }
    let rho = CorrelationParam::new(rho).map_err(|e| e.to_string())?;
    let report = counterexample_search(rho, n, k1_max, k2_max, jobs).map_err(|e| e.to_string())?;
    match format {
        Format::Json => {
            let rows: Vec<serde_json::Value> = report
                .rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "k1": r.k1, "k2": r.k2, "mixed": r.mixed,
                        "best_simple": r.best_simple, "best_encoding": r.best_encoding,
                    })
                })
                .collect();
            let value = serde_json::json!({
                "rho": report.rho, "n": report.n,
                "k1_max": report.k1_max, "k2_max": report.k2_max,
                "hits": rows,
            });
            Ok(serde_json::to_string_pretty(&value).expect("serializable") + "\n")
        }
        Format::Csv => {
            let mut out = String::from("k1,k2,mixed,best_simple,best_encoding\n");
            for r in &report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.k1,
                    r.k2,
                    fmt(r.mixed),
                    fmt(r.best_simple),
                    r.best_encoding
                );
            }
            Ok(out)
        }
    }
}

fn star_asym_command(
    rho: f64,
    k: Option<u64>,
    k_min: u64,
    k_max: u64,
    points: usize,
    format: Format,
) -> Result<String, String> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err("star asymptotics need rho in (0, 1)".into());
    }
    let nu = gauss::nu(rho);
    let grid: Vec<u64> = match k {
        Some(single) => vec![single],
        None => {
            if points < 2 || k_min == 0 || k_max <= k_min {
                return Err("sweep needs points >= 2 and 0 < k_min < k_max".into());
            }
            let mut grid: Vec<u64> = (0..points)
                .map(|i| {
                    let t = i as f64 / (points - 1) as f64;
                    ((k_min as f64) * ((k_max as f64) / (k_min as f64)).powf(t)).round() as u64
                })
                .collect();
            grid.dedup();
            grid
        }
    };
    let slope = if grid.len() >= 10 && grid[grid.len() - 1] >= 100 * grid[0] {
        Some(gauss::rate_slope_diagnostic(rho, &grid))
    } else {
        None
    };
    let rows: Vec<(u64, f64, f64)> = grid
        .iter()
        .map(|&kv| {
            (
                kv,
                gauss::star_majority_limit(kv, rho),
                gauss::star_majority_lower_estimate(kv, nu),
            )
        })
        .collect();
    match format {
        Format::Json => {
            let values: Vec<serde_json::Value> = rows
                .iter()
                .map(|&(kv, limit, lower)| {
                    serde_json::json!({
                        "k": kv, "rho": rho, "nu": nu,
                        "limit_prob": limit, "lower_estimate": lower, "slope": slope,
                    })
                })
                .collect();
            Ok(serde_json::to_string_pretty(&values).expect("serializable") + "\n")
        }
        Format::Csv => {
            let mut out = String::from("k,rho,nu,limit_prob,lower_estimate,slope\n");
            for (kv, limit, lower) in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    kv,
                    fmt(rho),
                    fmt(nu),
                    fmt(limit),
                    fmt(lower),
                    slope.map(fmt).unwrap_or_default()
                );
            }
            Ok(out)
        }
    }
}

fn markov_command(input: &PathBuf, sets: &str, format: Format) -> Result<String, String> {
    let text = std::fs::read_to_string(input).map_err(|e| format!("{}: {e}", input.display()))?;
    let chain = ChainFile::parse(&text)?
        .build()
        .map_err(|e| e.to_string())?;
    let parsed_sets: Vec<BTreeSet<usize>> = sets
        .split('|')
        .map(|group| {
            group
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>().map_err(|e| e.to_string()))
                .collect()
        })
        .collect::<Result<_, String>>()?;
    if parsed_sets.len() < 2 {
        return Err("need at least two sets (A_0 and A_1)".into());
    }
    let steps = parsed_sets.len() - 1;
    let query =
        StayQuery::new(vec![&chain; steps], parsed_sets.clone()).map_err(|e| e.to_string())?;
    let exact = stay_probability_exact(&query);
    let bound = aks_bound(&query);
    let ratio = if bound > 0.0 { exact / bound } else { f64::NAN };
    let per_step = if bound > 0.0 {
        ratio.powf(1.0 / steps as f64)
    } else {
        f64::NAN
    };
    // Equality diagnostics apply to a constant-set query.
    let constant = parsed_sets.windows(2).all(|w| w[0] == w[1]);
    let equality = if constant {
        Some(equality_case_check(&chain, &parsed_sets[0]).map_err(|e| e.to_string())?)
    } else {
        None
    };
    match format {
        Format::Json => {
            let eq = equality.map(|d| {
                serde_json::json!({
                    "holds": d.holds,
                    "residual_norm": d.residual_norm,
                    "spectral_gap": d.spectral_gap,
                    "cross_check_error":
                        if d.cross_check_error.is_nan() { None } else { Some(d.cross_check_error) },
                })
            });
            let value = serde_json::json!({
                "steps": steps,
                "exact": exact,
                "bound": bound,
                "ratio": ratio,
                "ratio_per_step": per_step,
                "equality": eq,
            });
            Ok(serde_json::to_string_pretty(&value).expect("serializable") + "\n")
        }
        Format::Csv => {
            let mut out = String::from(
                "steps,exact,bound,ratio,ratio_per_step,equality_holds,residual_norm\n",
            );
            let (holds, residual) = equality
                .map(|d| (d.holds.to_string(), fmt(d.residual_norm)))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                steps,
                fmt(exact),
                fmt(bound),
                fmt(ratio),
                fmt(per_step),
                holds,
                residual
            );
            Ok(out)
        }
    }
}

fn walk_command(
    n: usize,
    tau: f64,
    seed: u64,
    trials: u64,
    format: Format,
) -> Result<String, String> {
    if tau <= 0.0 || tau.is_nan() {
        return Err("tau must be positive".into());
    }
    let steps_f = tau * n as f64;
    if (steps_f - steps_f.round()).abs() > 1e-9 {
        return Err(format!("tau * n = {steps_f} must be an integer step count"));
    }
    let steps = steps_f.round() as u32;
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    for trial in 0..trials {
        let density_s = rng.range(0.05, 0.95);
        let density_t = rng.range(0.05, 0.95);
        let mut s_set: Vec<usize> = (0..1usize << n)
            .filter(|_| rng.uniform() < density_s)
            .collect();
        if s_set.is_empty() {
            s_set.push(rng.below(1 << n));
        }
        let t_set: Vec<usize> = (0..1usize << n)
            .filter(|_| rng.uniform() < density_t)
            .collect();
        let f = nicd_core::cube::CubeFunction::indicator(n, s_set.iter().copied())
            .map_err(|e| e.to_string())?;
        let g = nicd_core::cube::CubeFunction::indicator(n, t_set.iter().copied())
            .map_err(|e| e.to_string())?;
        let exact =
            nicd_core::cube::lazy_walk_probability(&f, &g, steps).map_err(|e| e.to_string())?;
        let sigma_s = f.mean();
        let sigma_t = g.mean();
        let alpha = if sigma_t == 0.0 {
            f64::INFINITY
        } else if sigma_s == 1.0 {
            1.0
        } else {
            sigma_t.ln() / sigma_s.ln()
        };
        let wb = if alpha.is_finite() {
            gauss::walk_bound(sigma_s, alpha, tau, n)
        } else {
            gauss::WalkBound {
                main: 0.0,
                error: 0.0,
            }
        };
        rows.push((trial, sigma_s, sigma_t, exact, wb.main, wb.error));
    }
    match format {
        Format::Json => {
            let values: Vec<serde_json::Value> = rows
                .iter()
                .map(|&(trial, ss, st, exact, main, error)| {
                    serde_json::json!({
                        "trial": trial, "n": n, "tau": tau, "steps": steps,
                        "sigma_s": ss, "sigma_t": st,
                        "exact": exact, "bound_main": main, "bound_error": error,
                        "slack": exact - (main - error),
                    })
                })
                .collect();
            Ok(serde_json::to_string_pretty(&values).expect("serializable") + "\n")
        }
        Format::Csv => {
            let mut out = String::from(
                "trial,n,tau,steps,sigma_s,sigma_t,exact,bound_main,bound_error,slack\n",
            );
            for (trial, ss, st, exact, main, error) in rows {
                let _ = writeln!(
                    out,
                    "{trial},{n},{},{steps},{},{},{},{},{},{}",
                    fmt(tau),
                    fmt(ss),
                    fmt(st),
                    fmt(exact),
                    fmt(main),
                    fmt(error),
                    fmt(exact - (main - error))
                );
            }
            Ok(out)
        }
    }
}

fn verify_command(check: &str, opts: &VerifyOpts) -> Result<verify::CheckReport, String> {
    let name = check.strip_prefix("check_").unwrap_or(check);
    let n = opts.n;
    let rho = opts.rho.unwrap_or(0.5);
    let report = match name {
        "forward_bb" => verify::check_forward_bb(n.unwrap_or(6), opts.trials, opts.seed),
        "reverse_bb" => verify::check_reverse_bb(n.unwrap_or(6), opts.trials, opts.seed),
        "two_function" => verify::check_two_function(n.unwrap_or(6), opts.trials, opts.seed),
        "two_point_coefficients" => {
            verify::check_two_point_coefficients(opts.terms, opts.trials, opts.seed)
        }
        "reverse_holder" => verify::check_reverse_holder(n.unwrap_or(6), opts.trials, opts.seed),
        "isoperimetric_sets" => {
            verify::check_isoperimetric_sets(n.unwrap_or(10), opts.trials, opts.seed)
        }
        "walk_bound" => verify::check_walk_bound(n.unwrap_or(14), opts.trials, opts.seed),
        "fkg_measure" => {
            let edges = match &opts.input {
                Some(path) => {
                    let (inst, _, _) = load_instance(path)?;
                    inst.edges().to_vec()
                }
                // Default: three leaves plus a two-edge tail.
                None => vec![(0, 1), (0, 2), (0, 3), (0, 4), (4, 5)],
            };
            verify::check_fkg_measure(&edges, rho, opts.trials, opts.seed)
        }
        "conditional_hit_monotonicity" => {
            let n = n.unwrap_or(5);
            if n.is_multiple_of(2) || n > 9 {
                return Err("conditional-hit check needs odd n <= 9".into());
            }
            verify::check_conditional_hit_monotonicity(n, rho, opts.ell_max)
        }
        "maj_crossover" => {
            let n = n.unwrap_or(5);
            if opts.r.is_multiple_of(2) || opts.r > n {
                return Err("majority arity must be odd and at most n".into());
            }
            verify::check_maj_crossover(rho, n, opts.r, opts.k_max)
        }
        "tpower_diagnostic" => {
            let grid: Vec<u64> = (2..=11).map(|i| 1u64 << i).collect();
            verify::check_tpower_diagnostic(rho, n.unwrap_or(9), &grid)
        }
        other => {
            return Err(format!(
                "unknown check {other:?}; expected one of forward_bb, reverse_bb, two_function, \
                 two_point_coefficients, reverse_holder, isoperimetric_sets, walk_bound, \
                 fkg_measure, conditional_hit_monotonicity, maj_crossover, tpower_diagnostic"
            ));
        }
    };
    Ok(report)
}
