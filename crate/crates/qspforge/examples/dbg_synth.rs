use qspforge::linalg::haar_random_unitary;
use qspforge::state::Kind;
use qspforge::univariate::*;
use qspforge::multivariate::*;

fn main() {
    let mut worst1 = 0.0f64; let mut fail1 = 0; let mut over1 = 0;
    for seed in 0..200u64 {
        let ops: Vec<_> = (0..21).map(|k| haar_random_unitary(2, 1000 + seed * 37 + k).unwrap()).collect();
        let p = Protocol1D::new(SignalConvention::full(Kind::Analytic), ops).unwrap();
        let s = evaluate_protocol_1d(&p).unwrap();
        match synthesize_1d(&s, SignalConvention::full(Kind::Analytic)) {
            Ok(q) => {
                let l2 = s.l2_distance(&evaluate_protocol_1d(&q).unwrap()).unwrap();
                if l2 > worst1 { worst1 = l2; }
                if l2 > 1e-8 { over1 += 1; }
            }
            Err(_) => fail1 += 1,
        }
    }
    println!("1D n=20, 200 seeds: worst l2 = {worst1:.3e}, gate failures = {fail1}, l2>1e-8 = {over1}");

    let mut worst3 = 0.0f64; let mut fail3 = 0; let mut over3 = 0; let mut zero_ep = 0;
    for seed in 0..300u64 {
        let ops: Vec<_> = (0..=10u64).map(|k| haar_random_unitary(3, 100_000 + seed * 101 + k).unwrap()).collect();
        let p = Protocol3D::new(ops).unwrap();
        let s = evaluate_protocol_3d(&p).unwrap();
        match decompose_3d(&s) {
            Ok(q) => {
                let l2 = s.l2_distance(&evaluate_protocol_3d(&q).unwrap()).unwrap();
                if l2 > worst3 { worst3 = l2; }
                if l2 > 1e-8 { over3 += 1; }
            }
            Err(qspforge::Error::ZeroEndpoint { .. }) => zero_ep += 1,
            Err(_) => fail3 += 1,
        }
    }
    println!("3D n=10, 300 seeds: worst l2 = {worst3:.3e}, gate failures = {fail3}, zero-endpoints = {zero_ep}, l2>1e-8 = {over3}");
}
