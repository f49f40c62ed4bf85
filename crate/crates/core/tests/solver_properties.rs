use blowave::approximate::CutoffSpec;
use blowave::asymptotic::AsymptoticData;
use blowave::datum::Datum;
use blowave::radial::{sample_function, RadialGrid, RadialProfile};
use blowave::solver::{solve_backward, solve_forward, BackwardProblemSpec, SolveStatus, SolverOptions};

fn forward_from(
    d0: &Datum,
    d1: &Datum,
    grid: RadialGrid,
    t_max: f64,
    decimation: usize,
) -> blowave::solver::SolveOutcome {
    let u0 = sample_function(|r| d0.eval(r), grid).unwrap();
    let u1 = sample_function(|r| d1.eval(r), grid).unwrap();
    let opts = SolverOptions { t_max, decimation, ..Default::default() };
    solve_forward(&u0, &u1, &opts).unwrap()
}

/// `u(t_end, r)` from the last stored slice of a forward run.
fn final_u(out: &blowave::solver::SolveOutcome, r: f64) -> f64 {
    let k = out.field.valid_slices() - 1;
    out.field.value_at(out.field.time(k), r).unwrap() / r
}

#[test]
fn halving_the_step_quarters_the_error() {
    let (d0, d1) = (Datum::bump(0.2, 1.0, 0.0), Datum::bump(0.3, 1.5, 0.0));
    let (t_max, r_max) = (4.0, 8.0);
    let reference = forward_from(&d0, &d1, RadialGrid::with_spacing(r_max, 1.0 / 512.0).unwrap(), t_max, 512);
    assert_eq!(reference.status, SolveStatus::Completed);
    let probes: Vec<f64> = (1..64).map(|k| k as f64 * 0.1).collect();
    let errors: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|n| {
            let out = forward_from(&d0, &d1, RadialGrid::with_spacing(r_max, 1.0 / n).unwrap(), t_max, 4);
            probes.iter().map(|&r| (final_u(&out, r) - final_u(&reference, r)).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.2..=4.8).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn data_outside_the_backward_cone_do_not_reach_the_probe() {
    let grid = RadialGrid::with_spacing(12.0, 1.0 / 32.0).unwrap();
    let d0 = Datum::Zero;
    let near = Datum::bump(1.0, 1.0, 0.0);
    let far = Datum::Bump { a: 0.05, w: 1.0, center: 6.0 };
    let plain = forward_from(&d0, &near, grid, 2.0, 1);
    let u0 = RadialProfile::zeros(grid);
    let u1 = sample_function(|r| near.eval(r) + far.eval(r), grid).unwrap();
    let perturbed = solve_forward(&u0, &u1, &SolverOptions { t_max: 2.0, ..Default::default() }).unwrap();
    // backward cone of (t, r) = (2, 1) meets t = 0 in r ≤ 3; the far bump lives in [5, 7]
    let a = final_u(&plain, 1.0);
    let b = final_u(&perturbed, 1.0);
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    assert!((final_u(&plain, 5.0) - final_u(&perturbed, 5.0)).abs() > 1e-3);
}

#[test]
fn forward_run_from_backward_initial_slice_reproduces_the_field() {
    let data = AsymptoticData::from_datum(Datum::bump(1.0, 1.0, 0.0)).unwrap();
    let t_match = 10.0;
    let h = 1.0 / 16.0;
    let mut spec = BackwardProblemSpec::new(data, CutoffSpec::new(0.1, 0.1).unwrap(), t_match, h);
    spec.solver.decimation = 8;
    let back = solve_backward(&spec).unwrap();
    assert_eq!(back.outcome.status, SolveStatus::Completed);

    let (u0, u1) = back.total_u(0).unwrap();
    let grid = *u0.grid();
    // room for the data tails to leave through r_max
    let wide = RadialGrid::with_spacing(grid.r_max() + t_match + 1.0, h).unwrap();
    let extend = |p: &RadialProfile| sample_function(|r| p.interpolate(r).unwrap_or(0.0), wide).unwrap();
    let opts = SolverOptions { t_max: t_match, decimation: 8, ..Default::default() };
    let fwd = solve_forward(&extend(&u0), &extend(&u1), &opts).unwrap();
    assert_eq!(fwd.status, SolveStatus::Completed);

    let mut worst: f64 = 0.0;
    for k in 1..fwd.field.valid_slices() {
        let t = fwd.field.time(k);
        let kb = back.outcome.field.slice_index(t).unwrap();
        assert!((back.outcome.field.time(kb) - t).abs() < 1e-9);
        let (ub, _) = back.total_u(kb).unwrap();
        let (mut diff, mut norm) = (0.0, 0.0);
        for (j, r) in grid.nodes().enumerate().skip(1) {
            let uf = fwd.field.slice(k)[j] / r;
            diff += (uf - ub.values()[j]).powi(2) * r * r;
            norm += ub.values()[j].powi(2) * r * r;
        }
        worst = worst.max((diff / norm).sqrt());
    }
    assert!(worst < 0.05, "relative L² error {worst}");
}
