use std::fs;
use std::io::Write;

use rayon::prelude::*;
use serde_json::{json, Value};

use qprobe_core::config::Config;
use qprobe_core::superop::SolveOptions;
use qprobe_core::trajectory::{histogram, run_bernoulli, run_per_realization, Records};
use qprobe_core::verify::{self, Level};
use qprobe_core::{Error, IntervalDistribution, QuantumModel, SpectralData, SuperoperatorSet};

use crate::output::{csv_writer, num, sink, write_json, CliError};
use crate::{Axis, FnArgs, Format, McArgs, McMode, ProblemArgs, StatsArgs, SweepArgs, VerifyArgs, VerifyLevel};

struct Problem {
    config: Config,
    model: QuantumModel,
    dist: IntervalDistribution,
    spec: SpectralData,
}

fn load_config(a: &ProblemArgs) -> Result<Config, CliError> {
    let mut cfg = match &a.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?
            .parse()?,
        None => Config::default(),
    };
    let mut flags = Config::default();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.set(k, v);
        }
    };
    put("kind", a.kind.clone());
    put("l", a.l.map(|v| v.to_string()));
    put("gamma", a.gamma.map(num));
    put("x_in", a.xin.map(|v| v.to_string()));
    put("x_d", a.xd.map(|v| v.to_string()));
    put("problem", a.problem.clone());
    put("dist", a.dist.clone());
    put("tau", a.tau.map(num));
    put("mean", a.mean.map(num));
    put("alpha", a.alpha.map(num));
    put("seed", a.seed.map(|v| v.to_string()));
    put("degeneracy_tol", a.degeneracy_tol.map(num));
    for entry in &a.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {entry:?}")))?;
        flags.set(k, v.trim());
    }
    cfg.merge(&flags);
    Ok(cfg)
}

fn load(a: &ProblemArgs) -> Result<Problem, CliError> {
    load_from(load_config(a)?)
}

fn load_from(config: Config) -> Result<Problem, CliError> {
    let model = config.model()?;
    let dist = config.distribution()?;
    let spec = model.spectral_reduce(config.degeneracy_tol()?)?;
    Ok(Problem { config, model, dist, spec })
}

fn header(p: &Problem) -> Value {
    json!({
        "config": p.config.entries(),
        "model": p.model.label,
        "distribution": p.dist,
    })
}

pub fn stats(a: StatsArgs) -> Result<(), CliError> {
    let p = load(&a.problem)?;
    let set = SuperoperatorSet::build(&p.spec, &p.dist)?;
    let opts = SolveOptions {
        pseudo_inverse: a.pseudo_inverse,
        ..SolveOptions::default()
    };
    let s = set.detection_stats(&opts)?;
    let census = set.zero_mode_census(a.zero_tol)?;
    let identity = set.universal_identity_check(&s, p.model.is_return());
    let out = a.output.out.as_deref();
    if a.output.format == Some(Format::Csv) {
        let mut w = csv_writer(out)?;
        w.write_record(["p_det", "n_mean", "n_sq", "t_mean", "t_sq", "n_var", "t_var", "j_condition", "reduced_dim", "n_zero", "n_nonzero"])?;
        w.write_record([
            num(s.p_det),
            num(s.n_mean),
            num(s.n_sq),
            num(s.t_mean),
            num(s.t_sq),
            num(s.n_var),
            num(s.t_var),
            num(s.j_condition),
            s.reduced_dim.to_string(),
            census.n_zero.to_string(),
            census.n_nonzero.to_string(),
        ])?;
        w.flush()?;
        return Ok(());
    }
    let mut v = header(&p);
    v["reduced_dim"] = json!(p.spec.reduced_dim);
    v["energies"] = json!(p.spec.energies);
    v["stats"] = serde_json::to_value(&s)?;
    v["zero_modes"] = serde_json::to_value(&census)?;
    v["identity"] = serde_json::to_value(&identity)?;
    v["exceptional_pairs"] = serde_json::to_value(set.exceptional_pairs())?;
    write_json(out, &v)
}

pub fn series(a: FnArgs) -> Result<(), CliError> {
    let p = load(&a.problem)?;
    let f = SuperoperatorSet::build(&p.spec, &p.dist)?.fn_series(a.nmax)?;
    // roundoff negatives are clamped for display only
    let shown: Vec<f64> = f.iter().map(|x| x.max(0.0)).collect();
    let out = a.output.out.as_deref();
    if a.output.format == Some(Format::Json) {
        let mut v = header(&p);
        v["fn"] = json!(shown);
        v["sum"] = json!(f.iter().sum::<f64>());
        return write_json(out, &v);
    }
    let mut w = csv_writer(out)?;
    w.write_record(["n", "fn", "cumulative"])?;
    let mut total = 0.0;
    for (k, (&x, &raw)) in shown.iter().zip(&f).enumerate() {
        total += raw;
        w.write_record([(k + 1).to_string(), num(x), num(total)])?;
    }
    w.flush()?;
    Ok(())
}

const SWEEP_OUTPUTS: [&str; 6] = ["p_det", "n_mean", "n_sq", "t_mean", "t_sq", "lambda_max"];

pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Usage(format!("grid {text:?}: {m}"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step".into()));
        }
        let (start, stop, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad("need step > 0 and stop >= start".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=count).map(|k| start + k as f64 * step).collect()
    } else {
        text.split(',').map(parse).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(bad("values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("values must be strictly increasing".into()));
    }
    Ok(grid)
}

struct SweepRow {
    values: Vec<Option<f64>>,
    condition: Option<f64>,
    status: &'static str,
    message: String,
}

fn sweep_point(spec: &SpectralData, dist: Result<IntervalDistribution, Error>, outputs: &[&str], opts: &SolveOptions) -> SweepRow {
    let fail = |status, message: String, condition| SweepRow {
        values: vec![None; outputs.len()],
        condition,
        status,
        message,
    };
    let set = match dist.and_then(|d| SuperoperatorSet::build(spec, &d)) {
        Ok(s) => s,
        Err(e) => return fail("error", e.to_string(), None),
    };
    let s = match set.detection_stats(opts) {
        Ok(s) => s,
        Err(Error::IllConditioned { condition, pairs }) => {
            let list: Vec<String> = pairs.iter().map(|p| format!("({},{})", p.i, p.j)).collect();
            return fail("ill_conditioned", list.join(" "), Some(condition));
        }
        Err(e @ (Error::Divergent(_) | Error::DegenerateProblem(_))) => return fail("divergent", e.to_string(), None),
        Err(e) => return fail("error", e.to_string(), None),
    };
    let lambda = outputs
        .contains(&"lambda_max")
        .then(|| set.zero_mode_census(qprobe_core::superop::DEFAULT_ZERO_TOL).map(|c| c.slowest_decay.norm()))
        .transpose();
    let lambda = match lambda {
        Ok(l) => l,
        Err(e) => return fail("error", e.to_string(), Some(s.j_condition)),
    };
    let values = outputs
        .iter()
        .map(|&o| match o {
            "p_det" => Some(s.p_det),
            "n_mean" => Some(s.n_mean),
            "n_sq" => Some(s.n_sq),
            "t_mean" => Some(s.t_mean),
            "t_sq" => Some(s.t_sq),
            _ => lambda,
        })
        .collect();
    SweepRow {
        values,
        condition: Some(s.j_condition),
        status: if s.pseudo_inverse { "pseudo_inverse" } else { "ok" },
        message: String::new(),
    }
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.grid)?;
    let mut config = load_config(&a.problem)?;
    if a.axis == Axis::Mean && config.get("mean").is_none() && config.get("tau").is_none() {
        config.set("mean", num(grid[0]));
    }
    if a.axis == Axis::Alpha && config.get("alpha").is_none() {
        config.set("alpha", num(grid[0]));
    }
    let p = load_from(config)?;
    let outputs: Vec<&str> = a.outputs.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if outputs.is_empty() {
        return Err(CliError::Usage("no outputs requested".into()));
    }
    if let Some(bad) = outputs.iter().find(|o| !SWEEP_OUTPUTS.contains(o)) {
        return Err(CliError::Usage(format!("unknown output {bad:?}; choose from {}", SWEEP_OUTPUTS.join(","))));
    }
    let base = p.dist;
    let axis_name = match a.axis {
        Axis::Mean => "mean_tau",
        Axis::Alpha => {
            if !matches!(base, IntervalDistribution::Gamma { .. }) {
                return Err(CliError::Usage("--axis alpha needs dist=gamma".into()));
            }
            "alpha"
        }
    };
    let at = |x: f64| match (a.axis, base) {
        (Axis::Mean, d) => d.with_mean(x),
        (Axis::Alpha, d) => IntervalDistribution::gamma(x, d.mean()),
    };
    let opts = SolveOptions {
        pseudo_inverse: a.pseudo_inverse,
        ..SolveOptions::default()
    };
    let rows: Vec<SweepRow> = grid.par_iter().map(|&x| sweep_point(&p.spec, at(x), &outputs, &opts)).collect();

    let out = a.output.out.as_deref();
    if a.output.format == Some(Format::Json) {
        let points: Vec<Value> = grid
            .iter()
            .zip(&rows)
            .map(|(&x, r)| {
                let mut v = json!({ axis_name: x, "j_condition": r.condition, "status": r.status, "message": r.message });
                for (o, val) in outputs.iter().zip(&r.values) {
                    v[*o] = json!(val);
                }
                v
            })
            .collect();
        let mut v = header(&p);
        v["axis"] = json!(axis_name);
        v["points"] = json!(points);
        return write_json(out, &v);
    }
    let mut w = csv_writer(out)?;
    let mut head = vec![axis_name];
    head.extend(&outputs);
    head.extend(["j_condition", "status", "message"]);
    w.write_record(&head)?;
    let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
    for (&x, r) in grid.iter().zip(&rows) {
        let mut rec = vec![num(x)];
        rec.extend(r.values.iter().map(|&v| cell(v)));
        rec.extend([cell(r.condition), r.status.to_string(), r.message.clone()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn mc(a: McArgs) -> Result<(), CliError> {
    let p = load(&a.problem)?;
    let seed = p.config.seed()?;
    let ens = match a.mode {
        McMode::Bernoulli => run_bernoulli(&p.model, &p.dist, a.nreal, seed, a.n_abort, a.bins)?,
        McMode::PerRealization => run_per_realization(&p.model, &p.dist, a.nreal, a.n_cut.max(a.bins), seed, false)?,
    };
    let summary = ens.summary();

    if let Some(path) = &a.records {
        let mut w = csv_writer(Some(path))?;
        match &ens.records {
            Records::Bernoulli(r) => {
                w.write_record(["realization", "n", "t", "censored"])?;
                for (i, x) in r.iter().enumerate() {
                    w.write_record([i.to_string(), x.n.to_string(), num(x.t), x.censored.to_string()])?;
                }
            }
            Records::PerRealization(r) => {
                w.write_record(["realization", "nbar", "p_det", "tail_bound", "steps"])?;
                for (i, x) in r.iter().enumerate() {
                    w.write_record([i.to_string(), num(x.nbar), num(x.p_det), num(x.tail_bound), x.steps.to_string()])?;
                }
            }
        }
        w.flush()?;
    }
    if let Some(path) = &a.series {
        let mut w = csv_writer(Some(path))?;
        w.write_record(["n", "fn_mean", "fn_stderr"])?;
        for n in 0..a.bins.min(ens.fn_mean.len()) {
            w.write_record([(n + 1).to_string(), num(ens.fn_mean[n]), num(ens.fn_stderr[n])])?;
        }
        w.flush()?;
    }
    if let Some(path) = &a.hist {
        let Records::PerRealization(r) = &ens.records else {
            return Err(CliError::Usage("--hist needs --mode per-realization".into()));
        };
        let h = histogram(r.iter().map(|x| x.nbar), 1.0, a.bin_width)?;
        let total = r.len().max(1) as f64;
        let mut w = csv_writer(Some(path))?;
        w.write_record(["nbar_lo", "nbar_hi", "count", "density"])?;
        for (lo, c) in h {
            w.write_record([num(lo), num(lo + a.bin_width), c.to_string(), num(c as f64 / (total * a.bin_width))])?;
        }
        w.flush()?;
    }

    let mut v = header(&p);
    v["summary"] = serde_json::to_value(&summary)?;
    write_json(a.output.out.as_deref(), &v)
}

pub fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let level = match a.level {
        VerifyLevel::Quick => Level::Quick,
        VerifyLevel::Full => Level::Full,
    };
    let results = verify::run(level);
    let failed = results.iter().filter(|r| !r.passed).count();
    let out = a.output.out.as_deref();
    match a.output.format {
        Some(Format::Json) => write_json(out, &json!({ "level": level, "checks": results, "failed": failed }))?,
        Some(Format::Csv) => {
            let mut w = csv_writer(out)?;
            w.write_record(["check", "passed", "seconds", "detail"])?;
            for r in &results {
                w.write_record([r.name.clone(), r.passed.to_string(), format!("{:.3}", r.seconds), r.detail.clone()])?;
            }
            w.flush()?;
        }
        None => {
            let mut w = sink(out)?;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                writeln!(w, "{tag}  {:<22} {:>7.2}s  {}", r.name, r.seconds, r.detail)?;
            }
            w.flush()?;
        }
    }
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} check(s) failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        let g = parse_grid("0.1:0.5:0.1").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.5).abs() < 1e-12);
        assert_eq!(parse_grid("1,2,5").unwrap(), vec![1.0, 2.0, 5.0]);
        for bad in ["2,1", "0,1", "1:0:0.1", "a,b", "1:2", "1,1"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ring.cfg");
        fs::write(&path, "kind = ring\nL = 5\nmean = 0.6\n").unwrap();
        let args = ProblemArgs {
            config: Some(path),
            l: Some(7),
            set: vec!["x_d=2".into()],
            ..ProblemArgs::default()
        };
        let cfg = load_config(&args).unwrap();
        assert_eq!(cfg.get("l"), Some("7"));
        assert_eq!(cfg.get("x_d"), Some("2"));
        assert_eq!(cfg.get("mean"), Some("0.6"));
    }
}
