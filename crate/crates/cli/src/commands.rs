use std::fmt::Write as _;
use std::path::Path;

use ultranet::binary::{folding_tau, gamma_expm, ExpmMode, FoldingReport, FoldingScenario};
use ultranet::montecarlo::{simulate, SimConfig};
use ultranet::oracle::{compare, discretize};
use ultranet::spectral::{Tau, TauReport};
use ultranet::{Convention, NetworkSpec, SpectralSolver};

use crate::config::Loaded;
use crate::output::{emit_plotdata, num, write_file, Series};
use crate::CliError;

type Out = Result<String, CliError>;

fn json<T: serde::Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("report serializes");
    s.push('\n');
    s
}

fn tau_str(t: &Tau) -> String {
    match t {
        Tau::Finite(v) => num(*v),
        Tau::Infinite => "inf".into(),
    }
}

fn density_series(
    solver: &SpectralSolver,
    spec: &NetworkSpec,
    datum: &ultranet::CellFunction,
    times: &[f64],
) -> Result<Series, CliError> {
    let state = solver.init(datum, false).map_err(CliError::Core)?;
    let mut series = Series::new(&spec.basin_names(), spec.prime(), datum)?;
    for &t in times {
        let d = if t == 0.0 {
            datum.clone()
        } else {
            solver.eval_density(&state, t).map_err(CliError::Core)?
        };
        series.push(t, &d);
    }
    Ok(series)
}

pub fn classify(l: &Loaded, out: &Path) -> Out {
    let spec = l.spec()?;
    let c = spec.classify().map_err(CliError::Core)?;
    let agg = spec.aggregate_rates();
    let lam = spec.build_lambda();
    let mut s = format!("{}\n", c.summary());
    let _ = writeln!(s, "convention = {}", c.convention);
    let _ = writeln!(s, "m_matrix = {}", c.is_m_matrix);
    let _ = writeln!(s, "substochastic = {}", c.is_substochastic);
    s.push_str("basin,lambda_bar,mu_bar,sink,row_sum\n");
    for (a, name) in spec.basin_names().iter().enumerate() {
        let _ = writeln!(
            s,
            "{name},{},{},{},{}",
            num(agg.lambda_bar[a]),
            num(agg.mu_bar[a]),
            num(agg.sink[a]),
            num(c.row_sums[a])
        );
    }
    s.push_str("Lambda\n");
    for row in lam.entries.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| num(*x)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    write_file(out, "classification.txt", &s)?;
    write_file(out, "classification.json", &json(&c))?;
    Ok(s)
}

pub fn solve(l: &Loaded, out: &Path) -> Out {
    let spec = l.spec()?;
    let big_r = l.truncation(&spec);
    let solver = SpectralSolver::new(&spec, big_r).map_err(CliError::Core)?;
    let datum = l.datum(&spec, big_r)?;
    let times = l.times()?;
    let series = density_series(&solver, &spec, &datum, &times)?;
    emit_plotdata(out, "density", &series)?;
    let mut rates = String::from("basin,r,rate,sigma,inverse_rate\n");
    for d in solver.decay_rates() {
        let _ = writeln!(
            rates,
            "{},{},{},{},{}",
            d.basin,
            d.r,
            num(d.rate),
            num(d.sigma),
            num(d.inverse_rate)
        );
    }
    write_file(out, "decay_rates.csv", &rates)?;
    Ok(format!(
        "solved {} cells over {} times (R = {big_r}, convention = {})\n{rates}",
        series.columns.len(),
        times.len(),
        spec.convention()
    ))
}

fn tau_text(rep: &TauReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "tau = {}", tau_str(&rep.tau));
    let _ = writeln!(s, "immediate = {}", rep.immediate);
    let _ = writeln!(s, "threshold = {}", num(rep.threshold));
    let _ = writeln!(s, "dt = {}", num(rep.dt));
    let _ = writeln!(s, "horizon = {}", num(rep.horizon));
    let _ = writeln!(s, "steps = {}", rep.steps);
    match &rep.crossing {
        Some(c) => {
            let digits: String = c
                .digits
                .iter()
                .map(|d| format!("{d}"))
                .collect::<Vec<_>>()
                .join(if c.digits.iter().any(|&d| d > 9) {
                    "-"
                } else {
                    ""
                });
            let _ = writeln!(
                s,
                "crossing = {}:{} value {}",
                c.basin,
                digits,
                num(c.value)
            );
        }
        None => s.push_str("crossing = none\n"),
    }
    match &rep.dominant {
        Some(d) => {
            let _ = writeln!(
                s,
                "dominant = {} {} contribution {} constant part {}",
                d.basin,
                d.index.label(),
                num(d.contribution),
                num(d.constant_part)
            );
        }
        None => s.push_str("dominant = none\n"),
    }
    s
}

pub fn tau(l: &Loaded, out: &Path) -> Out {
    let spec = l.spec()?;
    let big_r = l.truncation(&spec);
    let solver = SpectralSolver::new(&spec, big_r).map_err(CliError::Core)?;
    let datum = l.datum(&spec, big_r)?;
    let rep = solver
        .absorbing_time(&datum, &l.tau_options())
        .map_err(CliError::Core)?;
    let s = format!("convention = {}\n{}", spec.convention(), tau_text(&rep));
    write_file(out, "tau.txt", &s)?;
    write_file(out, "tau.json", &json(&rep))?;
    Ok(s)
}

pub fn oracle(l: &Loaded, out: &Path) -> Out {
    let spec = l.spec()?.with_convention(Convention::Derived);
    let big_r = l.truncation(&spec);
    let datum = l.datum(&spec, big_r)?;
    let times = l.times()?;
    let gaps = compare(&spec, &datum, &times).map_err(CliError::Core)?;
    let mut s = String::from("t,max_gap,within_1e-8\n");
    for (t, g) in times.iter().zip(&gaps) {
        let _ = writeln!(s, "{},{},{}", num(*t), num(*g), *g <= 1e-8);
    }
    write_file(out, "oracle_gap.csv", &s)?;
    if l.config.oracle.as_ref().is_some_and(|o| o.dump_generator) {
        let gen = discretize(&spec, big_r as usize + 1, l.orientation()).map_err(CliError::Core)?;
        let mut buf = Vec::new();
        gen.write_csv(&mut buf)
            .map_err(|e| CliError::Io(e.to_string()))?;
        write_file(
            out,
            "generator.csv",
            &String::from_utf8(buf).expect("ascii csv"),
        )?;
    }
    Ok(s)
}

pub fn simulate_cmd(l: &Loaded, out: &Path) -> Out {
    let spec = l.spec()?;
    let big_r = l.truncation(&spec);
    let datum = l.datum(&spec, big_r)?;
    let gen = discretize(&spec, big_r as usize + 1, l.orientation()).map_err(CliError::Core)?;
    let sc = l.simulate();
    let cfg = SimConfig {
        n_paths: sc.paths,
        seed: sc.seed,
        record_times: l.times()?,
    };
    let res = simulate(&gen, &datum, &cfg).map_err(CliError::Core)?;
    let mut s = String::from("t,state,estimate,stderr,n_alive,kill_fraction\n");
    for e in &res.estimates {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(e.t),
            e.state,
            num(e.mean),
            num(e.stderr),
            e.n_alive,
            num(e.kill_fraction)
        );
    }
    write_file(out, "mc.csv", &s)?;
    let mut states = String::from("state,basin,cell\n");
    let names = spec.basin_names();
    for (i, c) in gen.states.iter().enumerate() {
        let _ = writeln!(
            states,
            "{i},{},{}",
            names[gen.basin_of[i]],
            c.digit_label(spec.prime())
        );
    }
    write_file(out, "states.csv", &states)?;
    Ok(format!(
        "simulated {} paths from each of {} states (seed {})\n",
        sc.paths,
        gen.dim(),
        sc.seed
    ))
}

fn folding_text(rep: &FoldingReport, large_a: &str) -> String {
    let g = &rep.gamma;
    let mut s = String::new();
    let _ = writeln!(s, "convention = {}", rep.convention);
    let _ = writeln!(s, "alpha = {}", num(g.alpha));
    let _ = writeln!(s, "beta = {}", num(g.beta));
    let _ = writeln!(s, "gamma = {}", num(g.gamma));
    let _ = writeln!(s, "A = {}", num(rep.a));
    let _ = writeln!(
        s,
        "eigenvalues = {}, {}",
        num(rep.eigenvalues.0),
        num(rep.eigenvalues.1)
    );
    let _ = writeln!(s, "average_U = {}", num(rep.average_u));
    let _ = writeln!(s, "average_N = {}", num(rep.average_n));
    let _ = writeln!(s, "datum_max = {}", num(rep.datum_max));
    let _ = writeln!(s, "fast_rate = {}", num(rep.fast_rate));
    let _ = writeln!(s, "slow_time_constant = {}", num(rep.slow_time_constant));
    let _ = writeln!(s, "fast_time_constant = {}", num(rep.fast_time_constant));
    let _ = writeln!(s, "tau_formula = {}", num(rep.tau_formula));
    let _ = writeln!(s, "tau_numeric = {}", tau_str(&rep.tau_numeric));
    let _ = writeln!(
        s,
        "tau_numeric_derived = {}",
        tau_str(&rep.tau_numeric_derived)
    );
    let _ = writeln!(s, "large_a = {large_a}");
    s.push_str(&tau_text(&rep.tau));
    s
}

pub fn folding_demo(l: &Loaded, out: &Path) -> Out {
    let (fc, at) = l.folding()?;
    let names: Vec<&str> = l
        .config
        .basins
        .iter()
        .map(|b| b.get_ref().name.as_str())
        .collect();
    if names.len() != 2 {
        return Err(l.error_at(at, "folding-demo needs exactly two basins"));
    }
    let find = |n: &str| {
        names
            .iter()
            .position(|x| *x == n)
            .ok_or_else(|| l.error_at(at.clone(), format!("no basin named {n:?}")))
    };
    let order = [find(&fc.unfolded)?, find(&fc.native)?];
    let spec = l.spec_ordered(Some(&order))?.with_convention(fc.convention);
    let scenario = FoldingScenario {
        spec: spec.clone(),
        r: fc.r,
        amplitude: fc.amplitude,
        threshold: fc.threshold,
    };
    let g = scenario.validate().map_err(|e| l.error_at(at.clone(), e))?;
    let rep = folding_tau(&scenario).map_err(CliError::Core)?;

    let times = if l.config.time.is_some() {
        l.times()?
    } else {
        let span = [rep.slow_time_constant, rep.fast_time_constant]
            .into_iter()
            .filter(|x| x.is_finite() && *x > 0.0)
            .fold(0.0f64, f64::max);
        let h = if span > 0.0 { 2.0 * span } else { 1.0 };
        (0..=50).map(|k| h * k as f64 / 50.0).collect()
    };
    let large_a = match gamma_expm(&g, 0.0, ExpmMode::LargeA { min_a: fc.min_a }) {
        Err(_) => format!("skipped (A below min-A = {})", num(fc.min_a)),
        Ok(_) => {
            let mut worst = 0.0f64;
            for &t in &times {
                let e = gamma_expm(&g, t, ExpmMode::Exact).map_err(CliError::Core)?;
                let a = gamma_expm(&g, t, ExpmMode::LargeA { min_a: fc.min_a })
                    .map_err(CliError::Core)?;
                worst = worst.max((e - a).abs().max());
            }
            format!("max deviation from exact over the time grid {}", num(worst))
        }
    };
    let s = folding_text(&rep, &large_a);
    write_file(out, "folding.txt", &s)?;
    write_file(out, "folding.json", &json(&rep))?;

    let solver = SpectralSolver::new(&spec, scenario.truncation()).map_err(CliError::Core)?;
    let datum = ultranet::binary::ivp2_datum(&spec, &g, fc.r, fc.amplitude, scenario.truncation())
        .map_err(CliError::Core)?;
    let series = density_series(&solver, &spec, &datum, &times)?;
    emit_plotdata(out, "folding_density", &series)?;
    Ok(s)
}
