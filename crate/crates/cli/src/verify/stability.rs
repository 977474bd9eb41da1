use dust_einstein::diagnostics::ratio_drift;
use dust_einstein::evolution::{run, Sampling, Scenario};
use dust_einstein::grid::Grid3;
use dust_einstein::initial_data::{construct_modified_data, perturbed_flrw};

use crate::config::RunConfig;
use crate::run::execute;

use super::Check;

pub const STABILITY_CONFIG: &str = include_str!("../../configs/stability.toml");
pub const BREAKDOWN_CONFIG: &str = include_str!("../../configs/breakdown.toml");

fn parse(text: &str) -> RunConfig {
    let cfg = RunConfig::from_toml(text).expect("curated config parses");
    cfg.validate().expect("curated config is valid");
    cfg
}

pub fn desk_scale() -> Vec<Check> {
    let cfg = parse(STABILITY_CONFIG);
    let grid = Grid3::new(cfg.numerics.n).expect("valid size");
    let params = cfg.params();
    let initial = perturbed_flrw(&grid, &params, &cfg.perturbation_spec())
        .map_err(|e| e.to_string())
        .and_then(|geo| construct_modified_data(&grid, &geo, &params).map_err(|e| e.to_string()));
    let out = initial.and_then(|st| {
        run(&grid, &params, st, &cfg.evolution(), Sampling { norms: &cfg.norms, every: cfg.output.sample_every })
            .map_err(|e| e.to_string())
    });
    let out = match out {
        Ok(out) => out,
        Err(e) => return vec![Check::failed(8, "stability run", e)],
    };
    let setting = format!(
        "n = {}, amplitude {}, t_final = {}, {} steps, {} samples",
        cfg.numerics.n,
        cfg.perturbation.amplitude,
        cfg.numerics.t_final,
        out.steps,
        out.records.len()
    );
    let completed = !out.report.is_breakdown() && (out.final_state.t - cfg.numerics.t_final).abs() < 1e-9;
    let mut checks = vec![Check::new(
        8,
        "run completes without breakdown",
        out.final_state.t,
        format!("t reaches {} with outcome None", cfg.numerics.t_final),
        completed,
        format!("outcome {} ({setting})", out.report.scenario),
    )];
    let Some(first) = out.records.first() else {
        checks.push(Check::failed(8, "diagnostics", "no samples recorded".into()));
        return checks;
    };
    let s0 = first.norms.total();
    let sup = out.records.iter().map(|r| r.norms.total()).fold(0.0f64, f64::max);
    checks.push(Check::at_most(8, "sup_t S_Total / S_Total(0)", sup / s0, 5.0, format!("S_Total(0) = {s0:.4e}")));
    let drifts = ratio_drift(&out.records);
    let (worst_name, worst) =
        drifts.iter().fold(("none", 1.0f64), |acc, &(name, d)| if d > acc.1 { (name, d) } else { acc });
    let listed = drifts.iter().map(|(n, d)| format!("{n} {d:.3}")).collect::<Vec<_>>().join(", ");
    checks.push(Check::new(
        8,
        "norm/energy ratio drift (max/min over the run)",
        worst,
        "< 2".into(),
        worst < 2.0,
        format!("worst {worst_name}; {listed}"),
    ));
    checks
}

pub fn breakdown() -> Vec<Check> {
    let cfg = parse(BREAKDOWN_CONFIG);
    let dir = std::env::temp_dir().join(format!("dust-einstein-breakdown-{}", std::process::id()));
    let result = execute(&cfg, &dir, None);
    let _ = std::fs::remove_dir_all(&dir);
    match result {
        Ok(outcome) => {
            let r = &outcome.report;
            let witness = r
                .witness
                .as_ref()
                .map(|w| format!("{} = {:.3e} at {:?}", w.quantity, w.value, w.point))
                .unwrap_or_default();
            let detail =
                format!("scenario {} at t = {:.4}, {} steps, witness {witness}", r.scenario, r.time, outcome.steps);
            vec![
                Check::new(
                    9,
                    "amplitude-0.5 run exits with a breakdown code",
                    outcome.exit_code as f64,
                    "10, 11 or 12".into(),
                    r.scenario != Scenario::None && (10..=12).contains(&outcome.exit_code),
                    detail,
                ),
                Check::new(
                    9,
                    "breakdown detected before any non-finite value",
                    if r.non_finite { 1.0 } else { 0.0 },
                    "non_finite = false".into(),
                    !r.non_finite,
                    String::new(),
                ),
            ]
        }
        Err(e) => vec![Check::failed(9, "breakdown run", e.to_string())],
    }
}
