use audience_core::estimation::{BaseIntensities, LatentNetwork};
use audience_core::inference::{
    build_precompute, infer_intensities, infer_intensities_scalar, rank_audience, IntensityMatrix,
};
use audience_core::kernels::{KernelBank, Provenance};
use audience_core::{CategoryIndex, CountMatrix, KernelParams};
use proptest::prelude::*;

const CELLS: usize = 180;
const N: usize = 3;

#[derive(Debug, Clone)]
struct Instance {
    mu: Vec<f64>,
    beta: Vec<Vec<f64>>,
    kernels: Vec<KernelParams>,
    rows: Vec<Vec<Vec<(usize, u32)>>>,
}

fn arb_kernel() -> impl Strategy<Value = KernelParams> {
    prop_oneof![
        (1.0f64..60.0).prop_map(|omega| KernelParams::Exponential { omega }),
        (1.0f64..60.0, 1.0f64..6.0).prop_map(|(s, k)| KernelParams::weibull(s, k)),
        (5.0f64..40.0, 40.0f64..90.0, 0.1f64..0.9)
            .prop_map(|(a, b, w)| KernelParams::mow(&[(a, 5.0, w), (b, 5.0, 1.0 - w)])),
    ]
}

fn arb_instance() -> impl Strategy<Value = Instance> {
    let users = 5usize;
    (
        prop::collection::vec(0.0f64..1.0, N),
        prop::collection::vec(prop::collection::vec(0.0f64..1.5, N), N),
        prop::collection::vec(arb_kernel(), N * N),
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec((0..CELLS, 1u32..4), 0..12), users),
            N,
        ),
    )
        .prop_map(|(mu, beta, kernels, rows)| Instance { mu, beta, kernels, rows })
}

fn categories() -> CategoryIndex {
    CategoryIndex::new(["a", "b", "c"])
}

impl Instance {
    fn parts(&self) -> (BaseIntensities, LatentNetwork, KernelBank, Vec<CountMatrix>) {
        let cats = categories();
        let mut bank = KernelBank::new(cats.clone());
        for t in 0..N {
            for s in 0..N {
                bank.set(t, s, self.kernels[t * N + s].clone(), Provenance::Given, 0);
            }
        }
        let counts = self
            .rows
            .iter()
            .enumerate()
            .map(|(c, r)| CountMatrix::from_rows(c, 1.0, CELLS, 0.0, r.clone()).unwrap())
            .collect();
        (
            BaseIntensities { categories: cats.clone(), rates: self.mu.clone(), span: 1.0 },
            LatentNetwork::from_matrix(cats, self.beta.clone()).unwrap(),
            bank,
            counts,
        )
    }
}

/// Direct double sum over cells with the kernel evaluated at the cell age.
fn naive(inst: &Instance, counts: &[CountMatrix], u: usize, c: usize) -> f64 {
    let mut v = inst.mu[c];
    for (src, m) in counts.iter().enumerate() {
        let k = &inst.kernels[c * N + src];
        for s in 0..CELLS {
            let n = m.get(u, s) as f64;
            if n > 0.0 {
                v += inst.beta[c][src] * n * k.eval((CELLS - 1 - s) as f64).unwrap();
            }
        }
    }
    v
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn three_paths_agree(inst in arb_instance()) {
        let (mu, net, bank, counts) = inst.parts();
        let pre = build_precompute(&net, &bank, 1.0, CELLS).unwrap();
        let fast = infer_intensities(&mu, &pre, &counts).unwrap();
        let slow = infer_intensities_scalar(&mu, &pre, &counts).unwrap();
        for u in 0..fast.num_users() {
            for c in 0..N {
                let reference = naive(&inst, &counts, u, c);
                prop_assert!(close(fast.get(u, c), reference), "matmul {} vs naive {}", fast.get(u, c), reference);
                prop_assert!(close(slow.get(u, c), reference), "scalar {} vs naive {}", slow.get(u, c), reference);
            }
        }
    }

    #[test]
    fn floor_and_linearity(inst in arb_instance()) {
        let (mu, net, bank, counts) = inst.parts();
        let pre = build_precompute(&net, &bank, 1.0, CELLS).unwrap();
        let once = infer_intensities(&mu, &pre, &counts).unwrap();
        let doubled: Vec<CountMatrix> = counts.iter().map(|m| m.scaled(2)).collect();
        let twice = infer_intensities(&mu, &pre, &doubled).unwrap();
        for u in 0..once.num_users() {
            for c in 0..N {
                prop_assert!(once.get(u, c) >= mu.rates[c]);
                let e1 = once.get(u, c) - mu.rates[c];
                let e2 = twice.get(u, c) - mu.rates[c];
                prop_assert!((e2 - 2.0 * e1).abs() <= 8.0 * f64::EPSILON * twice.get(u, c));
            }
        }
        let zero = BaseIntensities { rates: vec![0.0; N], ..mu };
        let once = infer_intensities(&zero, &pre, &counts).unwrap();
        let twice = infer_intensities(&zero, &pre, &doubled).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            prop_assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn ranking_ignores_monotone_transforms(scores in prop::collection::vec(0.0f64..10.0, 1..60), reach in 1usize..20) {
        let n = scores.len();
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let build = |v: Vec<f64>| IntensityMatrix::from_scores(ids.clone(), CategoryIndex::new(["a"]), v, 0.0).unwrap();
        let base = rank_audience(&build(scores.clone()), 0, reach).unwrap();
        for f in [|x: f64| 3.0 * x + 1.0, |x: f64| x.powi(3), |x: f64| (x / 4.0).exp(), |x: f64| x.ln_1p()] {
            let other = rank_audience(&build(scores.iter().map(|&x| f(x)).collect()), 0, reach).unwrap();
            let a: Vec<usize> = base.members.iter().map(|m| m.user).collect();
            let b: Vec<usize> = other.members.iter().map(|m| m.user).collect();
            prop_assert_eq!(a, b);
        }
    }
}
