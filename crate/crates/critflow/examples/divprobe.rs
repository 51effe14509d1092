use critflow::grid::{Grid, Rank, RealField};
use critflow::profiles;
use critflow::spectral::*;

fn main() {
    let g = Grid::new(32, 4.0 * std::f64::consts::PI).unwrap();
    let n = g.n();
    let profile = profiles::mollified_inverse_distance(&g, profiles::box_center(&g), 4.0 * g.spacing());
    let mut vec = RealField::zeros(&g, Rank::Vector3);
    vec.component_mut(0).copy_from_slice(profile.component(0));
    vec.remove_mean();
    let spec = forward_transform(&vec).unwrap();
    let proj = leray_project_spectral(&spec);
    // report the worst modes
    let mut worst = vec![];
    for i in 0..n { for j in 0..n { for k in 0..n {
        let idx = g.idx(i,j,k);
        let kv = g.wavevector(i,j,k);
        let dot = kv[0]*proj.component(0)[idx] + kv[1]*proj.component(1)[idx] + kv[2]*proj.component(2)[idx];
        if dot.norm() > 1e-8 {
            worst.push((dot.norm(), (g.mode(i), g.mode(j), g.mode(k))));
        }
    }}}
    worst.sort_by(|a,b| b.0.partial_cmp(&a.0).unwrap());
    for (d, m) in worst.iter().take(8) { println!("mode {:?}: |k.v| = {:.3e}", m, d); }
    println!("total offending modes: {}", worst.len());
}
