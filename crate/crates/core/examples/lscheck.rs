use trajseg::data::{generate_slds, toy_spec};
use trajseg::RngStream;

fn main() {
    let spec = toy_spec::<f64>(400, None).unwrap();
    let traj = generate_slds(&spec, &mut RngStream::from_seed(7)).unwrap();
    println!("z_true first 5: {:?}, around 80: {:?}", &traj.z_true[..5], &traj.z_true[78..83]);
    // OLS per mode from true pairs.
    for k in 0..3 {
        let mut sxx = nalgebra::DMatrix::<f64>::zeros(2, 2);
        let mut sxy = nalgebra::DMatrix::<f64>::zeros(2, 2);
        let mut n = 0;
        for t in 1..400 {
            if traj.z_true[t] != k { continue; }
            let prev = traj.x_true.row(t - 1).transpose();
            let cur = traj.x_true.row(t).transpose();
            sxx += &prev * prev.transpose();
            sxy += &cur * prev.transpose();
            n += 1;
        }
        let a = &sxy * sxx.try_inverse().unwrap();
        println!("mode {k} (n={n}): A_ols = [{:.3} {:.3}; {:.3} {:.3}]  spec A = [{:.3} {:.3}; {:.3} {:.3}]",
            a[(0,0)], a[(0,1)], a[(1,0)], a[(1,1)],
            spec.dynamics[k].a[(0,0)], spec.dynamics[k].a[(0,1)], spec.dynamics[k].a[(1,0)], spec.dynamics[k].a[(1,1)]);
    }
}
