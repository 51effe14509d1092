use critflow::fit::geometric_points;
use critflow::grid::Grid;
use critflow::operator::{differentiability_check, PerturbedOperator};
use critflow::profiles;
use critflow::stationary::{picard_solve, ForceSpec};

fn main() {
    let l = 4.0 * std::f64::consts::PI;
    for n in [48usize] {
        let grid = Grid::new(n, l).unwrap();
        let target = profiles::taylor_green(&grid, 1).scaled(0.02);
        let solve = picard_solve(&ForceSpec::Manufactured { target }, 1e-10, 200).unwrap();
        let p = PerturbedOperator::new(solve.solution).unwrap();
        let k_band = 2.0 * std::f64::consts::PI / l * (n as f64 / 3.0).floor();
        let lo = 8.0 / (k_band * k_band);
        let hi = 0.1 / grid.spectral_gap();
        let times = geometric_points(lo, hi, 6);
        let (s, sigma) = (0.9f64, -1.9f64);
        let f = profiles::random_solenoidal(&grid, 7, 43, 1, n / 3, s + 1.5);
        let t0 = std::time::Instant::now();
        let scan = differentiability_check(&p, &f, s, sigma, &times, 1e-9).unwrap();
        let expected = (s - sigma) / 2.0 - 1.0;
        println!(
            "N={n} (s={s}, sigma={sigma}): slope={:.4} expected={:.4} drift={:+.4} [{:.1?}]",
            scan.slope, expected, scan.slope - expected, t0.elapsed()
        );
    }
}
