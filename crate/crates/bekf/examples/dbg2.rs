use bekf::certificate::*;
use bekf::frames::build_p_frame;
use bekf::model::example_model;
use bekf::sym::SymMatrix;
use nalgebra::DVector;

fn main() {
    let model = example_model();
    let frame = build_p_frame(2).unwrap();
    let sigma = SymMatrix::identity(2).scale(0.5);
    let cfg = CertificateConfig::default();
    let x = DVector::from_vec(vec![8.0, 0.0]);
    let expansion = expand_error(&model, &x).unwrap();
    let _ = certify_sos_from_expansion(&expansion, &sigma, &frame.members()[0], 0, &cfg).unwrap();
}
