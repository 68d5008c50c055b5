use bekf::certificate::*;
use bekf::frames::build_p_frame;
use bekf::model::example_model;
use bekf::sym::SymMatrix;
use nalgebra::DVector;
use std::time::Instant;

fn main() {
    let model = example_model();
    let frame = build_p_frame(2).unwrap();
    let sigma = SymMatrix::identity(2).scale(0.5);
    let cfg = CertificateConfig::default();
    let t0 = Instant::now();
    let reps = 100;
    for r in 0..reps {
        let x = DVector::from_vec(vec![8.0 - 0.01 * r as f64, 0.3 * (r as f64 * 0.1).sin()]);
        let expansion = expand_error(&model, &x).unwrap();
        for (i, p) in frame.members().iter().enumerate() {
            let _ = certify_sos_from_expansion(&expansion, &sigma, p, i, &cfg).unwrap();
        }
    }
    let dt = t0.elapsed();
    println!("{} certs in {:?} -> {:.1} us/cert", reps * 4, dt, dt.as_micros() as f64 / (reps * 4) as f64);
}
