use wsnm_core::bench::{
    gen_lowrank_sparse, relative_error, run_instance, Method, SyntheticSpec,
};
use wsnm_core::rng::derive_seed;

#[test]
fn probe() {
    let cells: &[(usize, f64, f64, u64, [u64; 3])] = &[
        (24, 0.125, 0.05, 99, [0, 0, 0]),
        (24, 0.125, 0.05, 99, [0, 0, 1]),
        (40, 0.10, 0.05, 7, [0, 0, 0]),
        (150, 0.10, 0.05, 42, [0, 0, 0]),
        (150, 0.05, 0.10, 42, [0, 1, 0]),
        (150, 0.10, 0.10, 42, [1, 1, 0]),
        (150, 0.20, 0.20, 42, [3, 3, 0]),
        (150, 0.30, 0.30, 42, [5, 5, 0]),
        (150, 0.40, 0.10, 42, [7, 1, 0]),
        (150, 0.10, 0.40, 42, [1, 7, 0]),
        (150, 0.40, 0.40, 42, [7, 7, 0]),
        (300, 0.05, 0.05, 42, [0, 0, 0]),
        (300, 0.30, 0.05, 42, [1, 0, 0]),
    ];
    for &(size, p_r, p_e, base, idx) in cells {
        let spec = SyntheticSpec {
            size,
            p_r,
            p_e,
            seed: derive_seed(base, &idx),
        };
        let inst = gen_lowrank_sparse(&spec).unwrap();
        for method in [Method::Wsnm { p: 0.7 }, Method::Nnm] {
            let r = run_instance(&inst, &spec, method, 0).unwrap();
            println!(
                "m={size} p_r={p_r} p_e={p_e} {}: rel_err={:.3e} rank={} (true {}) iters={} conv={} {:.1}s",
                method.label(),
                r.rel_err,
                r.estimated_rank,
                inst.rank,
                r.iterations,
                r.converged,
                r.seconds,
            );
        }
    }
    let _ = relative_error; // keep the import useful if cells change
}
