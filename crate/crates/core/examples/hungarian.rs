//! Minimum-cost kernel-to-proposal matching on a rectangular cost matrix.

use saliency_prompt::head::match_hungarian;
use saliency_prompt::rng::SplitMix64;
use saliency_prompt::tensor::Tensor;

fn brute_force(cost: &[f64], n: usize, l: usize) -> f64 {
    fn go(cost: &[f64], n: usize, l: usize, col: usize, used: &mut Vec<bool>) -> f64 {
        if col == l {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for r in 0..n {
            if !used[r] {
                used[r] = true;
                best = best.min(cost[r * l + col] + go(cost, n, l, col + 1, used));
                used[r] = false;
            }
        }
        best
    }
    go(cost, n, l, 0, &mut vec![false; n])
}

fn main() -> saliency_prompt::Result<()> {
    let (n, l) = (6, 4);
    let mut rng = SplitMix64::new(42);
    let cost = Tensor::from_fn(&[n, l], |_| rng.uniform(0.0, 10.0));
    let m = match_hungarian(&cost)?;
    for &(k, p) in &m.pairs {
        println!("kernel {k} <- proposal {p} (cost {:.3})", cost.get(&[k, p]));
    }
    println!("unmatched kernels: {:?}", m.unmatched);
    println!(
        "total {:.6}, exhaustive minimum {:.6}",
        m.total_cost,
        brute_force(cost.data(), n, l)
    );
    Ok(())
}
