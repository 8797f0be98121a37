//! Results must not depend on the worker count or on reruns with one seed.

use fraclt::cov_kernels::ProcessKind;
use fraclt::frac_calc::{MultiIndex, Sign};
use fraclt::gp_sim::{PathSampler, TimeGrid};
use fraclt::local_time::lt_moments;
use fraclt::moment_engine::second_moment;
use fraclt::par::with_workers;
use fraclt::slnd::slnd_scan;

#[test]
fn worker_count_does_not_change_results() {
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let src = PathSampler::circulant(0.35, grid, 1, 200, 21).unwrap();
    let alpha = MultiIndex::new(vec![0.5]).unwrap();
    let kind = ProcessKind::subfbm(0.6).unwrap();
    let run = || {
        let mc = lt_moments(&src, &alpha, Sign::Minus, &[0.2], 1.0, &[0.1, 0.05]).unwrap();
        let quad = second_moment(&alpha, &[0.2], 1.0, 0.1, &kind, Sign::Plus).unwrap();
        let scan = slnd_scan(&kind, 6, 100, 5).unwrap().kappa_2n;
        (mc.iter().map(|m| (m.mean.mean, m.second_moment.mean)).collect::<Vec<_>>(), quad, scan)
    };
    let one = with_workers(Some(1), run);
    let three = with_workers(Some(3), run);
    let default = with_workers(None, run);
    assert_eq!(format!("{one:?}"), format!("{three:?}"));
    assert_eq!(format!("{one:?}"), format!("{default:?}"));
}

#[test]
fn same_seed_same_paths() {
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    let a = PathSampler::cholesky(ProcessKind::bifbm(0.4, 0.7).unwrap(), grid.clone(), 2, 5, 8).unwrap().collect();
    let b = PathSampler::cholesky(ProcessKind::bifbm(0.4, 0.7).unwrap(), grid, 2, 5, 8).unwrap().collect();
    for p in 0..5 {
        for k in 0..=128 {
            for l in 0..2 {
                assert_eq!(a.value(p, k, l).to_bits(), b.value(p, k, l).to_bits());
            }
        }
    }
}
