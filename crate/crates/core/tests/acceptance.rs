//! Acceptance suite. Each criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero when any criterion fails.
//!
//! Run alone with `cargo test --release --test acceptance`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use qprobe::correlations::{discord_two_qubit, negativity, Bipartition};
use qprobe::lindblad::{evolve, evolve_observed, IntegratorConfig, JumpOperator, LindbladGenerator};
use qprobe::models::{build_bacteria_model, BacteriaModelParams, NoiseChannels, TardigradeModelParams};
use qprobe::scenarios::{bundled, run_scenario, run_sweep, ModelSpec, ScenarioConfig, SweepConfig, SweepResult};
use qprobe::tensorspace::{ground_state, pauli_op, CompositeSpace, DensityMatrix, Pauli, SubsystemSpec, POSITIVITY_TOL};

const SUPEROPERATOR_SEED: u64 = 0x5EED_0001;
const DISCORD_SEED: u64 = 0x5EED_0002;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bundled_scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(bundled::get(name).unwrap().1).unwrap()
}

fn bundled_sweep(name: &str) -> SweepConfig {
    SweepConfig::from_toml_str(bundled::get(name).unwrap().1).unwrap()
}

fn tardigrade(cfg: &mut ScenarioConfig) -> &mut TardigradeModelParams {
    match &mut cfg.model {
        ModelSpec::Tardigrade(p) => p,
        _ => panic!("expected a tardigrade scenario"),
    }
}

fn bacteria(cfg: &mut ScenarioConfig) -> &mut BacteriaModelParams {
    match &mut cfg.model {
        ModelSpec::Bacteria(p) => p,
        _ => panic!("expected a bacteria scenario"),
    }
}

/// Steady values of `column` in sweep order.
fn steady_column(res: &SweepResult, column: &str) -> Vec<f64> {
    assert_eq!(res.failures().count(), 0, "sweep had failed points");
    res.records().map(|r| r.get(column).unwrap().value).collect()
}

fn fmt_values(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ")
}

fn trace_hermiticity_positivity() -> Verdict {
    let mut cfg = bundled_scenario("tardigrade");
    cfg.integrator.n_samples = 200;
    let scenario = qprobe::scenarios::Scenario::build(&cfg).unwrap();
    let traj = evolve_observed(scenario.generator(), &ground_state(scenario.space()), &cfg.integrator, |_, rho| {
        Ok::<_, qprobe::error::DynamicsError>(((rho.trace() - 1.0).norm(), rho.hermiticity_deviation(), rho.min_eigenvalue()))
    })
    .unwrap();
    let worst_trace = traj.samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let worst_herm = traj.samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let worst_eig = traj.samples.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    verdict(
        traj.samples.len() == 200 && worst_trace < 1e-10 && worst_herm <= 1e-12 && worst_eig >= -POSITIVITY_TOL,
        format!(
            "{} samples, max |Tr-1| = {worst_trace:.2e}, max |rho-rho^H| = {worst_herm:.2e}, min eigenvalue = {worst_eig:.2e}",
            traj.samples.len()
        ),
    )
}

fn closed_evolution_purity() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for name in ["bacteria_ci", "tardigrade"] {
        let mut cfg = bundled_scenario(name);
        cfg.noise_channels = Some(NoiseChannels::None);
        let ts = run_scenario(&cfg).unwrap();
        let dev = ts.column("purity").unwrap().iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max);
        pass &= dev <= 1e-6;
        details.push(format!("{name}: max |purity-1| = {dev:.2e}"));
    }
    verdict(pass, details.join("; "))
}

fn superoperator_oracle() -> Verdict {
    let mut rng = rng(SUPEROPERATOR_SEED);
    let mut worst: f64 = 0.0;
    let mut dims = Vec::new();
    for _ in 0..25 {
        let space = random_space(&mut rng, 16);
        let gen = random_generator(&mut rng, &space);
        let rho0 = random_state(&mut rng, &space);
        let t_final = 1.5;
        let cfg = IntegratorConfig::new(t_final, 2).with_tolerances(1e-11, 1e-13);
        let traj = evolve(&gen, &rho0, &cfg).unwrap();
        let exact = exact_evolution(&gen, rho0.entries(), t_final);
        worst = worst.max(max_abs_diff(traj.samples[1].entries(), &exact));
        dims.push(space.total_dim());
    }
    verdict(
        worst <= 1e-8,
        format!("25 generators (dims {:?}), max entrywise error at t_final = {worst:.2e}", dims),
    )
}

fn analytic_decay() -> Verdict {
    let kappa = 0.35;
    let space = CompositeSpace::single(SubsystemSpec::qubit("q"));
    let h = pauli_op(Pauli::Z).on_space(space.clone()).unwrap().scale(0.5 * 3.0);
    let lower = pauli_op(Pauli::Minus).on_space(space.clone()).unwrap();
    let gen = LindbladGenerator::new(h, vec![JumpOperator::from_rate("decay", kappa, &lower)]).unwrap();
    let mut excited = nalgebra::DMatrix::zeros(2, 2);
    excited[(1, 1)] = c(1.0, 0.0);
    let rho0 = DensityMatrix::new(space, excited).unwrap();
    let traj = evolve(&gen, &rho0, &IntegratorConfig::new(10.0, 101)).unwrap();
    let mut worst: f64 = 0.0;
    for (t, rho) in traj.times.iter().zip(&traj.samples) {
        let expect = (-2.0 * kappa * t).exp();
        worst = worst.max((rho.entries()[(1, 1)].re - expect).abs() / expect);
        worst = worst.max((rho.entries()[(0, 0)].re - (1.0 - expect)).abs() / (1.0 - expect).max(expect));
    }
    verdict(worst <= 1e-6, format!("kappa = {kappa}, 101 samples on [0, 10], max relative error = {worst:.2e}"))
}

fn purity_asymptote() -> Verdict {
    let mut cfg = bundled_scenario("tardigrade");
    tardigrade(&mut cfg).noise_exponent = Some(2.0);
    let ts = run_scenario(&cfg).unwrap();
    let p = *ts.column("purity").unwrap().last().unwrap();
    verdict((0.73..=0.83).contains(&p), format!("noise exponent 2, purity at 200 ns = {p:.4}"))
}

fn noise_monotonicity() -> Verdict {
    let res = run_sweep(&bundled_sweep("tardigrade_noise_sweep")).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for col in ["neg_light_rest", "neg_tardigrade_rest", "neg_qubit_rest"] {
        // sweep order is i = 0, 1, 2, 3; noise grows as i decreases
        let v = steady_column(&res, col);
        let monotone = v.windows(2).all(|w| w[0] <= w[1]);
        pass &= monotone;
        details.push(format!("{col} [i=0..3] = [{}]{}", fmt_values(&v), if monotone { "" } else { " NOT monotone" }));
    }
    let light = steady_column(&res, "neg_light_rest");
    let ratio = light[0] / light[3];
    pass &= ratio < 0.5;
    details.push(format!("light i=0/i=3 = {ratio:.3}"));
    verdict(pass, details.join("; "))
}

fn coupling_monotonicity() -> Verdict {
    let res = run_sweep(&bundled_sweep("tardigrade_coupling_sweep")).unwrap();
    let v = steady_column(&res, "neg_light_rest");
    let pass = v.len() == 7 && v.windows(2).all(|w| w[0] <= w[1]);
    verdict(pass, format!("g_ql = 0..0.3e9 (7 points), steady light:rest negativity = [{}]", fmt_values(&v)))
}

fn dephasing_suppression() -> Verdict {
    let res = run_sweep(&bundled_sweep("bacteria_ci_channels")).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for col in ["neg_light_bacteria", "discord_measure_II", "discord_measure_I"] {
        // sweep order: decay_only, decay_and_dephasing
        let v = steady_column(&res, col);
        pass &= v[1] <= v[0];
        details.push(format!("{col}: decay+dephasing {:.4e} vs decay-only {:.4e}", v[1], v[0]));
    }
    verdict(pass, details.join("; "))
}

fn zero_coupling_null() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();

    let mut cfg = bundled_scenario("bacteria_ci");
    bacteria(&mut cfg).coupling_base = [0.0, 0.0];
    let ts = run_scenario(&cfg).unwrap();
    let m = ts.rows.iter().flat_map(|r| r[4..].iter().map(|v| v.abs())).fold(0.0, f64::max);
    details.push(format!("bacteria from ground: max = {m:.1e}"));
    worst = worst.max(m);

    let mut cfg = bundled_scenario("tardigrade");
    {
        let p = tardigrade(&mut cfg);
        p.g_ql = 0.0;
        p.f_tl = 0.0;
    }
    let ts = run_scenario(&cfg).unwrap();
    let m = ts.rows.iter().flat_map(|r| r[4..].iter().map(|v| v.abs())).fold(0.0, f64::max);
    details.push(format!("tardigrade from ground: max = {m:.1e}"));
    worst = worst.max(m);

    // a product of local superpositions must stay a product state
    let mut params = BacteriaModelParams::ci_profile();
    params.coupling_base = [0.0, 0.0];
    let (space, gen) = build_bacteria_model(&params).unwrap();
    let mut rho = None::<DensityMatrix>;
    for s in space.subsystems() {
        let d = s.dim();
        let psi = nalgebra::DVector::from_fn(d, |k, _| c(1.0 / (k as f64 + 1.0), 0.3 * k as f64)).normalize();
        let local = DensityMatrix::from_pure(CompositeSpace::single(s.clone()), &psi).unwrap();
        rho = Some(match rho {
            None => local,
            Some(r) => r.tensor(&local).unwrap(),
        });
    }
    let rho0 = rho.unwrap();
    let light_bacteria = Bipartition::new([0, 1], [2, 3]).unwrap();
    let pair = Bipartition::new([2], [3]).unwrap();
    let cfg = IntegratorConfig::new(50.0, 51);
    let traj = evolve_observed(&gen, &rho0, &cfg, |_, rho| {
        let two = qprobe::correlations::partial_trace(rho, &[2, 3]).unwrap();
        let vals = [
            negativity(rho, &light_bacteria).unwrap(),
            negativity(rho, &pair).unwrap(),
            discord_two_qubit(&two, 0).unwrap(),
            discord_two_qubit(&two, 1).unwrap(),
        ];
        Ok::<_, qprobe::error::DynamicsError>(vals.into_iter().map(f64::abs).fold(0.0, f64::max))
    })
    .unwrap();
    let m = traj.samples.into_iter().fold(0.0, f64::max);
    details.push(format!("bacteria from local superpositions: max = {m:.1e}"));
    worst = worst.max(m);

    verdict(worst <= 1e-12, details.join("; "))
}

fn discord_oracle() -> Verdict {
    let mut rng = rng(DISCORD_SEED);
    let space = CompositeSpace::new(vec![SubsystemSpec::qubit("a"), SubsystemSpec::qubit("b")]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cs = random_bell_correlations(&mut rng);
        let rho = DensityMatrix::new(space.clone(), bell_diagonal_state(cs)).unwrap();
        let expect = bell_diagonal_discord(cs);
        for side in [0, 1] {
            worst = worst.max((discord_two_qubit(&rho, side).unwrap() - expect).abs());
        }
    }
    let bell = DensityMatrix::new(space.clone(), bell_diagonal_state([1.0, -1.0, 1.0])).unwrap();
    let d_bell = discord_two_qubit(&bell, 1).unwrap();
    let mut classical = nalgebra::DMatrix::zeros(4, 4);
    classical[(0, 0)] = c(0.5, 0.0);
    classical[(3, 3)] = c(0.5, 0.0);
    let classical = DensityMatrix::new(space.clone(), classical).unwrap();
    let d_classical = discord_two_qubit(&classical, 1).unwrap();
    let product = ground_state(&space);
    let d_product = discord_two_qubit(&product, 0).unwrap();
    let pass = worst <= 1e-3 && (d_bell - 1.0).abs() <= 1e-3 && d_classical <= 1e-3 && d_product <= 1e-3;
    verdict(
        pass,
        format!(
            "20 Bell-diagonal points, max error = {worst:.2e}; Bell state = {d_bell:.6}; classical = {d_classical:.1e}; product = {d_product:.1e}"
        ),
    )
}

fn full_profile_builds() -> Verdict {
    let params = BacteriaModelParams::default();
    let (space, gen) = build_bacteria_model(&params).unwrap();
    let rho = ground_state(&space);
    let start = Instant::now();
    let drho = gen.liouvillian_apply(&rho).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let tr = drho.trace().norm();
    let herm = qprobe::tensorspace::hermiticity_deviation(&drho);
    verdict(
        space.total_dim() == 2500 && tr < 1e-12 && herm == 0.0,
        format!(
            "dim {}, one Liouvillian application in {secs:.2} s (|Tr dρ| = {tr:.1e}); timed run: cargo bench --bench full_profile",
            space.total_dim()
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("trace/hermiticity/positivity, tardigrade 200 ns", trace_hermiticity_positivity),
        ("closed-evolution purity", closed_evolution_purity),
        ("superoperator oracle equivalence", superoperator_oracle),
        ("analytic amplitude damping", analytic_decay),
        ("tardigrade purity asymptote", purity_asymptote),
        ("noise monotonicity", noise_monotonicity),
        ("coupling monotonicity", coupling_monotonicity),
        ("dephasing suppression", dephasing_suppression),
        ("zero-coupling null", zero_coupling_null),
        ("discord oracle", discord_oracle),
        ("bacteria full profile (build + apply)", full_profile_builds),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        if !v.pass {
            failed += 1;
        }
        println!("{} {name} [{secs:.1} s]: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
