//! Bitwise reproducibility: worker counts, prefixes and payoff reuse.

use mssv::params::{uniform_grid, MarketGroupParams, PricingConfig};
use mssv::paths::{simulate_batch, PathBatch};
use mssv::payoffs::{PayoffDescriptor, PayoffKind};
use mssv::pricer::{convergence, price_corrected, price_zero_order, Estimate};
use mssv::weights::BatchWeights;
use mssv::with_workers;

fn config(n_paths: usize) -> PricingConfig {
    PricingConfig {
        group: MarketGroupParams { v0_delta: 1e-4, v1_delta: -4.5397e-5, v3_eps: -1.8526e-5, sigma_bar: 0.2020, r: 0.02 },
        grid: uniform_grid(50, 0.5).unwrap(),
        s0: 100.0,
        payoffs: Vec::new(),
        n_paths,
        seed: 99,
        full_model: None,
        substeps_per_interval: 10,
    }
}

fn asian() -> PayoffDescriptor {
    PayoffDescriptor::new(PayoffKind::AsianCall { strike: 100.0 })
}

fn barrier() -> PayoffDescriptor {
    PayoffDescriptor::new(PayoffKind::UpAndOutCall { strike: 100.0, barrier: 150.0 })
}

fn bits(e: &Estimate) -> (u64, u64, u64, u64) {
    (e.mean.to_bits(), e.stderr.to_bits(), e.ci95_low.to_bits(), e.ci95_high.to_bits())
}

fn run(cfg: &PricingConfig) -> (PathBatch, Vec<u64>) {
    let batch = simulate_batch(cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    let totals = w.totals().iter().map(|x| x.to_bits()).collect();
    (batch, totals)
}

#[test]
fn batches_and_weights_ignore_worker_count() {
    let cfg = config(5_000);
    let (reference, ref_totals) = with_workers(1, || run(&cfg));
    for workers in [2, 4, 16] {
        let (batch, totals) = with_workers(workers, || run(&cfg));
        assert_eq!(batch, reference, "{workers} workers");
        assert_eq!(totals, ref_totals, "{workers} workers");
    }
}

#[test]
fn prices_ignore_worker_count() {
    let cfg = config(5_000);
    let price = || {
        let batch = simulate_batch(&cfg).unwrap();
        let w = BatchWeights::compute(&batch, &cfg.group);
        (bits(&price_zero_order(&batch, &asian()).unwrap()), bits(&price_corrected(&batch, &w, &asian()).unwrap()))
    };
    let reference = with_workers(1, price);
    for workers in [3, 8] {
        assert_eq!(with_workers(workers, price), reference);
    }
}

#[test]
fn payoff_order_does_not_matter() {
    let cfg = config(5_000);
    let batch = simulate_batch(&cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    let a1 = price_corrected(&batch, &w, &asian()).unwrap();
    let b1 = price_corrected(&batch, &w, &barrier()).unwrap();
    let b2 = price_corrected(&batch, &w, &barrier()).unwrap();
    let a2 = price_corrected(&batch, &w, &asian()).unwrap();
    assert_eq!(bits(&a1), bits(&a2));
    assert_eq!(bits(&b1), bits(&b2));
}

#[test]
fn shared_batch_equals_separate_runs() {
    let cfg = config(5_000);
    let batch = simulate_batch(&cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    let shared = [price_corrected(&batch, &w, &asian()).unwrap(), price_corrected(&batch, &w, &barrier()).unwrap()];
    for (p, expected) in [asian(), barrier()].iter().zip(&shared) {
        let fresh = simulate_batch(&cfg).unwrap();
        let fw = BatchWeights::compute(&fresh, &cfg.group);
        assert_eq!(bits(&price_corrected(&fresh, &fw, p).unwrap()), bits(expected));
    }
}

#[test]
fn convergence_prefix_matches_truncated_batch() {
    let cfg = config(20_000);
    let batch = simulate_batch(&cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    let series = convergence(&batch, &w, &asian(), &[200, 2_000, 20_000], None).unwrap();
    for c in &series.checkpoints {
        let small = config(c.n);
        let b = simulate_batch(&small).unwrap();
        let sw = BatchWeights::compute(&b, &small.group);
        assert_eq!(bits(&c.zero_order), bits(&price_zero_order(&b, &asian()).unwrap()), "N={}", c.n);
        assert_eq!(bits(&c.corrected), bits(&price_corrected(&b, &sw, &asian()).unwrap()), "N={}", c.n);
    }
    // the full prefix is the whole-batch estimate
    let last = series.checkpoints.last().unwrap();
    assert_eq!(bits(&last.zero_order), bits(&price_zero_order(&batch, &asian()).unwrap()));
    assert_eq!(bits(&last.corrected), bits(&price_corrected(&batch, &w, &asian()).unwrap()));
}

#[test]
fn convergence_edge_cases() {
    let cfg = config(1_000);
    let batch = simulate_batch(&cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    assert!(convergence(&batch, &w, &asian(), &[], None).unwrap().checkpoints.is_empty());
    assert!(convergence(&batch, &w, &asian(), &[10, 2_000], None).is_err());
    assert!(convergence(&batch, &w, &asian(), &[100, 10], None).is_err());
}

#[test]
fn zero_coefficients_reduce_to_zero_order_bitwise() {
    let mut cfg = config(5_000);
    cfg.group = cfg.group.without_correction();
    let batch = simulate_batch(&cfg).unwrap();
    let w = BatchWeights::compute(&batch, &cfg.group);
    assert!(w.totals().iter().all(|&t| t == 1.0));
    for p in [asian(), barrier(), PayoffDescriptor::new(PayoffKind::EuropeanPut { strike: 95.0 })] {
        assert_eq!(bits(&price_zero_order(&batch, &p).unwrap()), bits(&price_corrected(&batch, &w, &p).unwrap()));
    }
}

#[test]
fn weights_from_another_batch_are_rejected() {
    let cfg = config(100);
    let a = simulate_batch(&cfg).unwrap();
    let b = simulate_batch(&cfg).unwrap();
    let wb = BatchWeights::compute(&b, &cfg.group);
    assert!(price_corrected(&a, &wb, &asian()).is_err());
}
